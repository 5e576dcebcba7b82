#include "xda/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace xda {

namespace {

double sigmoid(double z) {
    return 1.0 / (1.0 + std::exp(-z));
}

// BCE against label d computed from the logit: max(z,0) - d*z + log(1+e^-|z|).
double bce_from_logit(double z, double d) {
    return std::max(z, 0.0) - d * z + std::log1p(std::exp(-std::abs(z)));
}

void check_head(const DiscriminatorHead& head, const FeatureMap& f, const char* what) {
    if (static_cast<int>(head.weights.size()) != f.channels) {
        throw ShapeMismatch(std::string(what) + ": head has " +
                            std::to_string(head.weights.size()) + " weights, map has " +
                            std::to_string(f.channels) + " channels");
    }
}

void check_scales(std::size_t maps, std::size_t heads, const char* what) {
    if (maps != heads) {
        throw ShapeMismatch(std::string(what) + ": " + std::to_string(maps) + " scales vs " +
                            std::to_string(heads) + " heads");
    }
}

// Channel means of a map (the image-level head's pooled input).
std::vector<double> channel_means(const FeatureMap& f) {
    std::vector<double> means(f.channels, 0.0);
    const std::size_t plane = f.cell_count();
    const double inv = 1.0 / static_cast<double>(plane);
    for (int c = 0; c < f.channels; ++c) {
        const double* src = f.data.data() + static_cast<std::size_t>(c) * plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            acc += src[i];
        }
        means[c] = acc * inv;
    }
    return means;
}

double head_logit(const DiscriminatorHead& head, std::span<const double> input) {
    double z = head.bias;
    for (std::size_t c = 0; c < input.size(); ++c) {
        z += head.weights[c] * input[c];
    }
    return z;
}

}  // namespace

void LossWeights::validate() const {
    const double values[] = {lambda1, lambda2, lambda3, lambda_d};
    for (double v : values) {
        if (!std::isfinite(v) || v < 0.0) {
            throw RangeError("loss weights must be finite and non-negative");
        }
    }
}

Discriminator make_discriminator(std::span<const int> channels_per_scale) {
    Discriminator d;
    for (int channels : channels_per_scale) {
        if (channels <= 0) {
            throw RangeError("discriminator: channel count must be positive");
        }
        DiscriminatorHead head;
        head.weights.assign(static_cast<std::size_t>(channels), 0.0);
        head.bias = 0.0;
        d.image_heads.push_back(head);
        d.instance_heads.push_back(std::move(head));
    }
    return d;
}

double detection_loss(const DetectionComponents& components, const LossWeights& w) {
    return w.lambda1 * components.l_bbox + w.lambda2 * components.l_obj +
           w.lambda3 * components.l_cls;
}

double total_loss(double l_sup, double l_unsup, double l_img, double l_ins, double l_con,
                  const LossWeights& w) {
    return l_sup + l_unsup + w.lambda_d * (l_img + l_ins + l_con);
}

std::vector<double> grl_backward(std::span<const double> upstream_grad, double lambda_d) {
    std::vector<double> out(upstream_grad.begin(), upstream_grad.end());
    grl_backward_inplace(out, lambda_d);
    return out;
}

void grl_backward_inplace(std::span<double> grad, double lambda_d) {
    const double factor = -lambda_d;
    for (double& g : grad) {
        g = factor * g;
    }
}

double discriminate_image(const FeatureMap& f, const DiscriminatorHead& head) {
    check_head(head, f, "image head");
    return sigmoid(head_logit(head, channel_means(f)));
}

std::vector<double> discriminate_instance(const FeatureMap& f, const DiscriminatorHead& head) {
    check_head(head, f, "instance head");
    const std::size_t plane = f.cell_count();
    std::vector<double> probs(plane, 0.0);
    for (std::size_t i = 0; i < plane; ++i) {
        double z = head.bias;
        for (int c = 0; c < f.channels; ++c) {
            z += head.weights[c] * f.data[static_cast<std::size_t>(c) * plane + i];
        }
        probs[i] = sigmoid(z);
    }
    return probs;
}

ImageLossResult image_domain_loss(std::span<const FeatureMap> features, const Discriminator& d,
                                  Domain domain, double lambda_d) {
    check_scales(features.size(), d.image_heads.size(), "image domain loss");
    const double label = static_cast<double>(static_cast<int>(domain));
    ImageLossResult result;
    for (std::size_t s = 0; s < features.size(); ++s) {
        const FeatureMap& f = features[s];
        const DiscriminatorHead& head = d.image_heads[s];
        check_head(head, f, "image head");

        const std::vector<double> means = channel_means(f);
        const double z = head_logit(head, means);
        const double p = sigmoid(z);
        result.loss += bce_from_logit(z, label);
        result.probabilities.push_back(p);

        const double dz = p - label;
        HeadGradients hg;
        hg.weights.resize(means.size());
        for (std::size_t c = 0; c < means.size(); ++c) {
            hg.weights[c] = dz * means[c];
        }
        hg.bias = dz;
        result.head_grads.push_back(std::move(hg));

        // dLoss/df spreads the pooled gradient uniformly over cells, then
        // passes through the reversal.
        FeatureMap grad = FeatureMap::zeros(f.stride, f.channels, f.height, f.width);
        const std::size_t plane = f.cell_count();
        const double inv = 1.0 / static_cast<double>(plane);
        for (int c = 0; c < f.channels; ++c) {
            const double g = dz * head.weights[c] * inv;
            double* dst = grad.data.data() + static_cast<std::size_t>(c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                dst[i] = g;
            }
        }
        grl_backward_inplace(grad.data, lambda_d);
        result.feature_grads.push_back(std::move(grad));
    }
    return result;
}

InstanceLossResult instance_domain_loss(std::span<const FeatureMap> reweighted_features,
                                        const Discriminator& d, Domain domain, double lambda_d) {
    check_scales(reweighted_features.size(), d.instance_heads.size(), "instance domain loss");
    const double label = static_cast<double>(static_cast<int>(domain));
    InstanceLossResult result;
    for (std::size_t s = 0; s < reweighted_features.size(); ++s) {
        const FeatureMap& f = reweighted_features[s];
        const DiscriminatorHead& head = d.instance_heads[s];
        check_head(head, f, "instance head");

        const std::size_t plane = f.cell_count();
        HeadGradients hg;
        hg.weights.assign(head.weights.size(), 0.0);
        FeatureMap grad = FeatureMap::zeros(f.stride, f.channels, f.height, f.width);

        for (std::size_t i = 0; i < plane; ++i) {
            double z = head.bias;
            for (int c = 0; c < f.channels; ++c) {
                z += head.weights[c] * f.data[static_cast<std::size_t>(c) * plane + i];
            }
            result.loss += bce_from_logit(z, label);
            const double dz = sigmoid(z) - label;
            hg.bias += dz;
            for (int c = 0; c < f.channels; ++c) {
                hg.weights[c] += dz * f.data[static_cast<std::size_t>(c) * plane + i];
                grad.data[static_cast<std::size_t>(c) * plane + i] = dz * head.weights[c];
            }
        }
        grl_backward_inplace(grad.data, lambda_d);
        result.head_grads.push_back(std::move(hg));
        result.feature_grads.push_back(std::move(grad));
    }
    return result;
}

ConsensusLossResult consensus_loss(std::span<const FeatureMap> features,
                                   std::span<const FeatureMap> reweighted_features,
                                   const Discriminator& d) {
    check_scales(features.size(), d.image_heads.size(), "consensus loss");
    check_scales(reweighted_features.size(), d.instance_heads.size(), "consensus loss");
    if (features.size() != reweighted_features.size()) {
        throw ShapeMismatch("consensus loss: feature scale counts differ");
    }
    ConsensusLossResult result;
    for (std::size_t s = 0; s < features.size(); ++s) {
        const FeatureMap& f = features[s];
        const FeatureMap& fr = reweighted_features[s];
        if (fr.height != f.height || fr.width != f.width || fr.stride != f.stride) {
            throw ShapeMismatch("consensus loss: reweighted map does not match plain map");
        }
        const DiscriminatorHead& img_head = d.image_heads[s];
        const DiscriminatorHead& ins_head = d.instance_heads[s];
        check_head(img_head, f, "image head");
        check_head(ins_head, fr, "instance head");

        const std::vector<double> means = channel_means(f);
        const double zq = head_logit(img_head, means);
        const double q = sigmoid(zq);
        const double dq_dz = q * (1.0 - q);

        const std::size_t plane = fr.cell_count();
        HeadGradients ins_hg;
        ins_hg.weights.assign(ins_head.weights.size(), 0.0);
        FeatureMap fr_grad = FeatureMap::zeros(fr.stride, fr.channels, fr.height, fr.width);

        double dl_dq = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            double zp = ins_head.bias;
            for (int c = 0; c < fr.channels; ++c) {
                zp += ins_head.weights[c] * fr.data[static_cast<std::size_t>(c) * plane + i];
            }
            const double p = sigmoid(zp);
            const double diff = p - q;
            result.loss += diff * diff;
            dl_dq += -2.0 * diff;
            const double dzp = 2.0 * diff * p * (1.0 - p);
            ins_hg.bias += dzp;
            for (int c = 0; c < fr.channels; ++c) {
                ins_hg.weights[c] += dzp * fr.data[static_cast<std::size_t>(c) * plane + i];
                fr_grad.data[static_cast<std::size_t>(c) * plane + i] =
                    dzp * ins_head.weights[c];
            }
        }

        const double dzq = dl_dq * dq_dz;
        HeadGradients img_hg;
        img_hg.weights.resize(means.size());
        for (std::size_t c = 0; c < means.size(); ++c) {
            img_hg.weights[c] = dzq * means[c];
        }
        img_hg.bias = dzq;

        FeatureMap f_grad = FeatureMap::zeros(f.stride, f.channels, f.height, f.width);
        const std::size_t f_plane = f.cell_count();
        const double inv = 1.0 / static_cast<double>(f_plane);
        for (int c = 0; c < f.channels; ++c) {
            const double g = dzq * img_head.weights[c] * inv;
            double* dst = f_grad.data.data() + static_cast<std::size_t>(c) * f_plane;
            for (std::size_t i = 0; i < f_plane; ++i) {
                dst[i] = g;
            }
        }

        result.image_head_grads.push_back(std::move(img_hg));
        result.instance_head_grads.push_back(std::move(ins_hg));
        result.feature_grads.push_back(std::move(f_grad));
        result.reweighted_feature_grads.push_back(std::move(fr_grad));
    }
    return result;
}

}  // namespace xda
