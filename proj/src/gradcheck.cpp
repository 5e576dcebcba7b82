#include "xda/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

namespace xda {

namespace {

constexpr double kStep = 1e-6;
constexpr double kRelTol = 1e-5;
constexpr double kZeroGuard = 1e-8;
constexpr std::size_t kMaxMessages = 32;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (static_cast<double>(rng() >> 11) * 0x1.0p-53) * (hi - lo);
}

struct Checker {
    GradCheckReport report;

    void record(const std::string& where, double analytic, double reference) {
        ++report.checks;
        const double diff = std::abs(analytic - reference);
        const double denom = std::max(std::abs(analytic), std::abs(reference));
        double rel = 0.0;
        bool pass = true;
        if (denom < kZeroGuard) {
            pass = diff < kZeroGuard;
            rel = diff;
        } else {
            rel = diff / denom;
            pass = rel < kRelTol;
        }
        report.max_rel_err = std::max(report.max_rel_err, rel);
        if (!pass) {
            ++report.failures;
            if (report.messages.size() < kMaxMessages) {
                char buf[192];
                std::snprintf(buf, sizeof(buf), "%s: analytic=%.12g reference=%.12g rel=%.3g",
                              where.c_str(), analytic, reference, rel);
                report.messages.emplace_back(buf);
            }
        }
    }

    void record_exact(const std::string& where, double got, double want) {
        ++report.checks;
        if (got != want) {
            ++report.failures;
            report.max_rel_err = std::max(report.max_rel_err, 1.0);
            if (report.messages.size() < kMaxMessages) {
                char buf[192];
                std::snprintf(buf, sizeof(buf), "%s: got=%.17g want=%.17g (exactness)",
                              where.c_str(), got, want);
                report.messages.emplace_back(buf);
            }
        }
    }
};

double central_diff(const std::function<double()>& eval, double& param) {
    const double saved = param;
    param = saved + kStep;
    const double up = eval();
    param = saved - kStep;
    const double down = eval();
    param = saved;
    return (up - down) / (2.0 * kStep);
}

struct Instance {
    std::vector<FeatureMap> features;
    std::vector<FeatureMap> reweighted;
    std::vector<SaliencyMatrix> saliency;
    Discriminator disc;
    Domain domain = Domain::target;
};

Instance random_instance(std::mt19937_64& rng) {
    Instance inst;
    const int scales = 1 + static_cast<int>(rng() % 3);
    for (int s = 0; s < scales; ++s) {
        const int channels = 1 + static_cast<int>(rng() % 8);
        const int height = 1 + static_cast<int>(rng() % 4);
        const int width = 1 + static_cast<int>(rng() % 4);
        FeatureMap f = FeatureMap::zeros(1 << s, channels, height, width);
        for (double& v : f.data) {
            v = uniform(rng, -1.0, 1.0);
        }
        SaliencyMatrix m = SaliencyMatrix::zeros(1 << s, height, width);
        for (double& v : m.grid) {
            v = uniform(rng, 0.0, 1.0);
        }
        inst.reweighted.push_back(reweight_features(f, m));
        inst.features.push_back(std::move(f));
        inst.saliency.push_back(std::move(m));

        DiscriminatorHead img_head;
        img_head.weights.resize(static_cast<std::size_t>(channels));
        for (double& w : img_head.weights) {
            w = uniform(rng, -1.0, 1.0);
        }
        img_head.bias = uniform(rng, -0.5, 0.5);
        DiscriminatorHead ins_head;
        ins_head.weights.resize(static_cast<std::size_t>(channels));
        for (double& w : ins_head.weights) {
            w = uniform(rng, -1.0, 1.0);
        }
        ins_head.bias = uniform(rng, -0.5, 0.5);
        inst.disc.image_heads.push_back(std::move(img_head));
        inst.disc.instance_heads.push_back(std::move(ins_head));
    }
    inst.domain = (rng() & 1) ? Domain::target : Domain::source;
    return inst;
}

void check_image_loss(Instance& inst, double lambda_d, Checker& chk) {
    const auto eval = [&]() {
        return image_domain_loss(inst.features, inst.disc, inst.domain, lambda_d).loss;
    };
    const ImageLossResult result =
        image_domain_loss(inst.features, inst.disc, inst.domain, lambda_d);
    const ImageLossResult unit =
        image_domain_loss(inst.features, inst.disc, inst.domain, 1.0);

    for (std::size_t s = 0; s < inst.features.size(); ++s) {
        DiscriminatorHead& head = inst.disc.image_heads[s];
        for (std::size_t c = 0; c < head.weights.size(); ++c) {
            chk.record("img w", result.head_grads[s].weights[c],
                       central_diff(eval, head.weights[c]));
        }
        chk.record("img b", result.head_grads[s].bias, central_diff(eval, head.bias));

        FeatureMap& f = inst.features[s];
        for (std::size_t i = 0; i < f.data.size(); ++i) {
            const double fd = central_diff(eval, f.data[i]);
            chk.record("img f", result.feature_grads[s].data[i], -lambda_d * fd);
            // Reversal contract: grads at lambda_d are exactly -lambda_d
            // times the raw descent direction (recovered from lambda_d = 1).
            const double raw = -unit.feature_grads[s].data[i];
            chk.record_exact("img grl", result.feature_grads[s].data[i], -lambda_d * raw);
        }
    }
}

void check_instance_loss(Instance& inst, double lambda_d, Checker& chk) {
    const auto eval = [&]() {
        return instance_domain_loss(inst.reweighted, inst.disc, inst.domain, lambda_d).loss;
    };
    const InstanceLossResult result =
        instance_domain_loss(inst.reweighted, inst.disc, inst.domain, lambda_d);
    const InstanceLossResult unit =
        instance_domain_loss(inst.reweighted, inst.disc, inst.domain, 1.0);

    for (std::size_t s = 0; s < inst.reweighted.size(); ++s) {
        DiscriminatorHead& head = inst.disc.instance_heads[s];
        for (std::size_t c = 0; c < head.weights.size(); ++c) {
            chk.record("ins w", result.head_grads[s].weights[c],
                       central_diff(eval, head.weights[c]));
        }
        chk.record("ins b", result.head_grads[s].bias, central_diff(eval, head.bias));

        FeatureMap& f = inst.reweighted[s];
        for (std::size_t i = 0; i < f.data.size(); ++i) {
            const double fd = central_diff(eval, f.data[i]);
            chk.record("ins f", result.feature_grads[s].data[i], -lambda_d * fd);
            const double raw = -unit.feature_grads[s].data[i];
            chk.record_exact("ins grl", result.feature_grads[s].data[i], -lambda_d * raw);
        }

        // Chain factor back to the plain map: exactly (1+m) per cell.
        const FeatureMap chained = reweight_backward(result.feature_grads[s], inst.saliency[s]);
        const std::size_t plane = f.cell_count();
        for (std::size_t i = 0; i < f.data.size(); ++i) {
            const double expected =
                (1.0 + inst.saliency[s].grid[i % plane]) * result.feature_grads[s].data[i];
            chk.record_exact("ins chain", chained.data[i], expected);
        }
    }
}

void check_consensus_loss(Instance& inst, Checker& chk) {
    const auto eval = [&]() {
        return consensus_loss(inst.features, inst.reweighted, inst.disc).loss;
    };
    const ConsensusLossResult result =
        consensus_loss(inst.features, inst.reweighted, inst.disc);

    for (std::size_t s = 0; s < inst.features.size(); ++s) {
        DiscriminatorHead& img_head = inst.disc.image_heads[s];
        for (std::size_t c = 0; c < img_head.weights.size(); ++c) {
            chk.record("con img w", result.image_head_grads[s].weights[c],
                       central_diff(eval, img_head.weights[c]));
        }
        chk.record("con img b", result.image_head_grads[s].bias,
                   central_diff(eval, img_head.bias));

        DiscriminatorHead& ins_head = inst.disc.instance_heads[s];
        for (std::size_t c = 0; c < ins_head.weights.size(); ++c) {
            chk.record("con ins w", result.instance_head_grads[s].weights[c],
                       central_diff(eval, ins_head.weights[c]));
        }
        chk.record("con ins b", result.instance_head_grads[s].bias,
                   central_diff(eval, ins_head.bias));

        FeatureMap& f = inst.features[s];
        for (std::size_t i = 0; i < f.data.size(); ++i) {
            chk.record("con f", result.feature_grads[s].data[i],
                       central_diff(eval, f.data[i]));
        }
        FeatureMap& fr = inst.reweighted[s];
        for (std::size_t i = 0; i < fr.data.size(); ++i) {
            chk.record("con fr", result.reweighted_feature_grads[s].data[i],
                       central_diff(eval, fr.data[i]));
        }
    }
}

}  // namespace

GradCheckReport run_gradient_checks(int num_instances, std::uint64_t seed, double lambda_d) {
    std::mt19937_64 rng(seed);
    Checker chk;
    for (int i = 0; i < num_instances; ++i) {
        Instance inst = random_instance(rng);
        check_image_loss(inst, lambda_d, chk);
        check_instance_loss(inst, lambda_d, chk);
        check_consensus_loss(inst, chk);
        ++chk.report.instances;
    }
    return chk.report;
}

}  // namespace xda
