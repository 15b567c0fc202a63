#pragma once

#include "slim/core/autograd.hpp"
#include "slim/train/classifier.hpp"

namespace slim {

// MSE(mask*a, mask*b) with the denominator equal to the total element count.
// The mask is (B,1,H,W) (broadcast over channels) or the full shape of a.
ag::Var masked_mse(const ag::Var& a, const ag::Var& b, const ag::Var& mask);

// RoI-masked latent fidelity between the source latent and its reconstruction.
ag::Var guide_loss(const ag::Var& z, const ag::Var& z_hat, const ag::Var& mask_latent);

// Masked pixel MSE plus a perceptual distance: mean over classifier stages of
// the MSE between channel-unit-normalized activations of the masked images.
ag::Var roi_loss(const ag::Var& x, const ag::Var& x_hat, const ag::Var& mask, const TaskClassifier& clf);

// Cross-entropy of the frozen classifier's logits on the reconstruction.
ag::Var task_loss(const ag::Var& x_hat, const std::vector<int>& labels, const TaskClassifier& clf);

}  // namespace slim
