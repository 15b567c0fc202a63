#pragma once

#include <string>
#include <vector>

#include "slim/core/checkpoint.hpp"
#include "slim/core/nn.hpp"
#include "slim/data/dataset.hpp"

namespace slim {

// Small convolutional classifier over K categories. Exposes its final conv
// feature maps (for Grad-CAM) and intermediate activations (for the
// perceptual term of the RoI loss).
class TaskClassifier {
public:
    TaskClassifier() = default;
    TaskClassifier(int num_classes, uint64_t seed);

    // trunk: image (B,3,H,W) -> final conv features (B,C_feat,H/16,W/16)
    ag::Var trunk(const ag::Var& x) const;
    // Same pass, also collecting the post-activation feature maps of each stage.
    ag::Var trunk_with_activations(const ag::Var& x, std::vector<ag::Var>& acts) const;
    // head: features -> logits (B,K)
    ag::Var head(const ag::Var& features) const;
    ag::Var forward(const ag::Var& x) const { return head(trunk(x)); }

    std::vector<int> predict(const Tensor& images) const;  // argmax labels
    double accuracy(const std::vector<LabeledImage>& images) const;

    int num_classes() const { return num_classes_; }
    nn::ParamList params() const;
    void freeze() { params().set_requires_grad(false); }

    void save(const std::string& path, const nlohmann::json& extra_meta = {}) const;
    static TaskClassifier load_file(const std::string& path);

    nlohmann::json meta;  // recorded validation accuracy etc.

private:
    int num_classes_ = 0;
    nn::Conv2d c1_, c2_, c3_, c4_;
    nn::Linear fc_;
};

struct ClassifierTrainConfig {
    int steps = 1500;
    int batch_size = 16;
    double lr = 1e-3;
    uint64_t seed = 0;
    double target_accuracy = 0.9;
};

// Trains on `train`, records clean validation accuracy on `val` into meta,
// then freezes the weights. Aborts on non-finite loss.
TaskClassifier train_classifier(const std::vector<LabeledImage>& train, const std::vector<LabeledImage>& val,
                                int num_classes, const ClassifierTrainConfig& cfg);

}  // namespace slim
