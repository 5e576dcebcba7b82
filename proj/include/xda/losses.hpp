#pragma once

#include <span>
#include <vector>

#include "xda/saliency.hpp"

namespace xda {

enum class Domain : int {
    source = 0,
    target = 1,
};

// Scalar weights of the loss stack. lambda1..3 weight the detection loss
// components, lambda_d weights the adversarial branch.
struct LossWeights {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    double lambda_d = 0.1;

    void validate() const;  // RangeError on negative or non-finite weights
};

// Per-channel affine map + sigmoid: the smallest head that is still
// differentiable end to end. Parameter count is channels + 1.
struct DiscriminatorHead {
    std::vector<double> weights;
    double bias = 0.0;
};

// One image-level and one instance-level head per feature scale. The
// image-level head scores the channel means of a map (one probability per
// image); the instance-level head scores every cell (1x1-conv semantics).
struct Discriminator {
    std::vector<DiscriminatorHead> image_heads;
    std::vector<DiscriminatorHead> instance_heads;
};

// Zero-initialised discriminator matching the channel count of each scale.
Discriminator make_discriminator(std::span<const int> channels_per_scale);

struct HeadGradients {
    std::vector<double> weights;
    double bias = 0.0;
};

struct DetectionComponents {
    double l_bbox = 0.0;
    double l_obj = 0.0;
    double l_cls = 0.0;
};

// lambda1 * l_bbox + lambda2 * l_obj + lambda3 * l_cls. Component losses come
// from the detector as opaque scalars; the same form serves labelled and
// pseudo-labelled batches.
double detection_loss(const DetectionComponents& components, const LossWeights& w);

// l_sup + l_unsup + lambda_d * (l_img + l_ins + l_con).
double total_loss(double l_sup, double l_unsup, double l_img, double l_ins, double l_con,
                  const LossWeights& w);

// Gradient-reversal backward rule: identity forward, -lambda_d * grad
// backward. The adversarial losses below apply this to their feature
// gradients; head gradients always descend.
std::vector<double> grl_backward(std::span<const double> upstream_grad, double lambda_d);
void grl_backward_inplace(std::span<double> grad, double lambda_d);

// Forward-only head evaluations.
double discriminate_image(const FeatureMap& f, const DiscriminatorHead& head);
std::vector<double> discriminate_instance(const FeatureMap& f, const DiscriminatorHead& head);

struct ImageLossResult {
    double loss = 0.0;
    std::vector<double> probabilities;        // D_img output per scale
    std::vector<HeadGradients> head_grads;    // descent direction per scale
    std::vector<FeatureMap> feature_grads;    // reversed: -lambda_d * dLoss/df
};

// Sum over scales of the binary cross-entropy between the image-level head's
// output and the domain label.
ImageLossResult image_domain_loss(std::span<const FeatureMap> features, const Discriminator& d,
                                  Domain domain, double lambda_d);

struct InstanceLossResult {
    double loss = 0.0;
    std::vector<HeadGradients> head_grads;
    std::vector<FeatureMap> feature_grads;    // w.r.t. the reweighted maps, reversed
};

// Sum over scales and cells of the per-cell binary cross-entropy between the
// instance-level head's output and the (per-image constant) domain label.
// Expects the saliency-reweighted maps; chaining the returned gradients back
// to the plain maps is reweight_backward's job.
InstanceLossResult instance_domain_loss(std::span<const FeatureMap> reweighted_features,
                                        const Discriminator& d, Domain domain, double lambda_d);

struct ConsensusLossResult {
    double loss = 0.0;
    std::vector<HeadGradients> image_head_grads;
    std::vector<HeadGradients> instance_head_grads;
    std::vector<FeatureMap> feature_grads;             // w.r.t. the plain maps
    std::vector<FeatureMap> reweighted_feature_grads;  // w.r.t. the reweighted maps
};

// Sum over scales and cells of the squared difference between each
// instance-level probability and the scale's image-level probability. Both
// heads should agree, so no gradient reversal is applied anywhere here.
ConsensusLossResult consensus_loss(std::span<const FeatureMap> features,
                                   std::span<const FeatureMap> reweighted_features,
                                   const Discriminator& d);

}  // namespace xda
