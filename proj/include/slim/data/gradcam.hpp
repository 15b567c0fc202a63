#pragma once

#include "slim/data/dataset.hpp"
#include "slim/train/classifier.hpp"

namespace slim {

// Gradient-weighted class activation map: the positive part of the
// gradient-weighted channel sum of the final conv features, bilinearly
// upsampled to image resolution and max-normalized into [0,1].
// `use_ground_truth_class` switches between the label and the predicted class.
RoIMask gradcam_mask(const LabeledImage& image, const TaskClassifier& classifier, bool use_ground_truth_class = true);

// Heatmap core shared with the tests: channel weights are the spatially
// averaged gradients; the weighted channel sum is rectified, upsampled to
// (H,W) and max-normalized.
Tensor gradcam_from_features(const Tensor& features, const Tensor& feature_grads, int out_h, int out_w);

}  // namespace slim
