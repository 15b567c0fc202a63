#include "slim/train/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "slim/core/rng.hpp"

namespace slim {

using ag::Var;

TaskClassifier::TaskClassifier(int num_classes, uint64_t seed) : num_classes_(num_classes) {
    Rng rng(seed);
    c1_ = nn::Conv2d(3, 16, 3, 2, 1, rng);
    c2_ = nn::Conv2d(16, 32, 3, 2, 1, rng);
    c3_ = nn::Conv2d(32, 32, 3, 2, 1, rng);
    c4_ = nn::Conv2d(32, 32, 3, 2, 1, rng);
    fc_ = nn::Linear(32, num_classes, rng);
}

Var TaskClassifier::trunk(const Var& x) const {
    Var h = ag::gelu(c1_(x));
    h = ag::gelu(c2_(h));
    h = ag::gelu(c3_(h));
    h = ag::gelu(c4_(h));
    return h;
}

Var TaskClassifier::trunk_with_activations(const Var& x, std::vector<Var>& acts) const {
    Var h = ag::gelu(c1_(x));
    acts.push_back(h);
    h = ag::gelu(c2_(h));
    acts.push_back(h);
    h = ag::gelu(c3_(h));
    acts.push_back(h);
    h = ag::gelu(c4_(h));
    acts.push_back(h);
    return h;
}

Var TaskClassifier::head(const Var& features) const { return fc_(ag::global_avg_pool(features)); }

std::vector<int> TaskClassifier::predict(const Tensor& images) const {
    Var logits = forward(ag::constant(images));
    const int B = logits->shape()[0], K = logits->shape()[1];
    std::vector<int> out(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
        int best = 0;
        for (int k = 1; k < K; ++k)
            if (logits->val.at(b, k) > logits->val.at(b, best)) best = k;
        out[static_cast<size_t>(b)] = best;
    }
    return out;
}

double TaskClassifier::accuracy(const std::vector<LabeledImage>& images) const {
    if (images.empty()) return 0.0;
    int correct = 0;
    for (const auto& img : images) {
        Tensor batch = img.pixels.reshaped(Shape{1, 3, img.height(), img.width()});
        if (predict(batch)[0] == img.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(images.size());
}

nn::ParamList TaskClassifier::params() const {
    nn::ParamList p;
    p.merge("clf.c1", c1_.params("c"));
    p.merge("clf.c2", c2_.params("c"));
    p.merge("clf.c3", c3_.params("c"));
    p.merge("clf.c4", c4_.params("c"));
    p.merge("clf.fc", fc_.params("l"));
    return p;
}

void TaskClassifier::save(const std::string& path, const nlohmann::json& extra_meta) const {
    Checkpoint ck;
    ck.meta = meta;
    ck.meta["kind"] = "classifier";
    ck.meta["num_classes"] = num_classes_;
    for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) ck.meta[it.key()] = it.value();
    ck.put_params(params(), Checkpoint::Dtype::f32);
    ck.save(path);
}

TaskClassifier TaskClassifier::load_file(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta.value("kind", "") != "classifier")
        throw std::runtime_error("classifier: checkpoint kind mismatch in " + path);
    TaskClassifier clf(ck.meta.at("num_classes").get<int>(), 0);
    ck.load_params(clf.params());
    clf.meta = ck.meta;
    clf.freeze();
    return clf;
}

TaskClassifier train_classifier(const std::vector<LabeledImage>& train, const std::vector<LabeledImage>& val,
                                int num_classes, const ClassifierTrainConfig& cfg) {
    if (train.empty()) throw std::invalid_argument("train_classifier: empty dataset");
    TaskClassifier clf(num_classes, cfg.seed);
    Rng rng(cfg.seed ^ 0xC1A551F1E5ULL);
    nn::AdamW opt(clf.params().vars(), cfg.lr, 0.9, 0.999, 1e-8, 1e-4);
    const int H = train[0].height(), W = train[0].width();
    for (int step = 0; step < cfg.steps; ++step) {
        const int B = std::min<int>(cfg.batch_size, static_cast<int>(train.size()));
        Tensor batch(Shape{B, 3, H, W});
        std::vector<int> labels(static_cast<size_t>(B));
        for (int b = 0; b < B; ++b) {
            const auto& img = train[static_cast<size_t>(rng.below(static_cast<int64_t>(train.size())))];
            std::copy(img.pixels.vec().begin(), img.pixels.vec().end(), batch.vec().begin() + static_cast<int64_t>(b) * 3 * H * W);
            labels[static_cast<size_t>(b)] = img.label;
        }
        opt.zero_grad();
        Var loss = ag::softmax_cross_entropy(clf.forward(ag::constant(batch)), labels);
        if (!std::isfinite(loss->val.item()))
            throw std::runtime_error("train_classifier: diverged at step " + std::to_string(step));
        ag::backward(loss);
        opt.step();
    }
    clf.meta["train_accuracy"] = clf.accuracy(train);
    clf.meta["val_accuracy"] = clf.accuracy(val.empty() ? train : val);
    clf.meta["seed"] = cfg.seed;
    clf.meta["steps"] = cfg.steps;
    clf.freeze();
    return clf;
}

}  // namespace slim
