#include "slim/data/gradcam.hpp"

#include <cmath>

namespace slim {

using ag::Var;

RoIMask gradcam_mask(const LabeledImage& image, const TaskClassifier& classifier, bool use_ground_truth_class) {
    const int H = image.height(), W = image.width();
    Tensor batch = image.pixels.reshaped(Shape{1, 3, H, W});

    // Run the trunk once, then re-enter the head from a fresh leaf so the
    // feature gradient is available even with frozen classifier weights.
    Var feats_val = classifier.trunk(ag::constant(batch));
    Var feats = ag::leaf(feats_val->val, true);
    Var logits = classifier.head(feats);

    int cls = image.label;
    if (!use_ground_truth_class) {
        cls = 0;
        for (int k = 1; k < classifier.num_classes(); ++k)
            if (logits->val.at(0, k) > logits->val.at(0, cls)) cls = k;
    }
    Tensor onehot(logits->shape(), 0.0);
    onehot.at(0, cls) = 1.0;
    Var score = ag::sum(ag::mul(logits, ag::constant(onehot)));
    ag::backward(score);
    if (!feats->grad_ready) throw std::runtime_error("gradcam_mask: classifier produced no feature gradient");

    RoIMask mask;
    mask.source_id = image.id;
    mask.values = gradcam_from_features(feats->val, feats->grad, H, W);
    return mask;
}

Tensor gradcam_from_features(const Tensor& features, const Tensor& feature_grads, int out_h, int out_w) {
    const int C = features.dim(1), fh = features.dim(2), fw = features.dim(3);
    std::vector<double> alpha(static_cast<size_t>(C), 0.0);
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int y = 0; y < fh; ++y)
            for (int x = 0; x < fw; ++x) acc += feature_grads.at(0, c, y, x);
        alpha[static_cast<size_t>(c)] = acc / (fh * fw);
    }
    Tensor heat(Shape{fh, fw}, 0.0);
    for (int y = 0; y < fh; ++y)
        for (int x = 0; x < fw; ++x) {
            double v = 0.0;
            for (int c = 0; c < C; ++c) v += alpha[static_cast<size_t>(c)] * features.at(0, c, y, x);
            heat[static_cast<int64_t>(y) * fw + x] = std::max(v, 0.0);
        }
    return normalize_mask(bilinear_resize(heat, out_h, out_w));
}

}  // namespace slim
