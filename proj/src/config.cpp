#include "xda/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

namespace xda {

namespace {

using nlohmann::json;

void check_unit_interval(double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw RangeError(std::string("config: ") + name + " must lie in [0,1]");
    }
}

void check_nonnegative(double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
        throw RangeError(std::string("config: ") + name + " must be finite and >= 0");
    }
}

}  // namespace

void RunConfig::validate() const {
    if (num_classes < 1) {
        throw RangeError("config: num_classes must be >= 1");
    }
    check_unit_interval(delta_t, "delta_t");
    check_unit_interval(delta_0, "delta_0");
    check_unit_interval(alpha_t, "alpha_t");
    check_unit_interval(alpha, "alpha");
    check_nonnegative(lambda_d, "lambda_d");
    check_nonnegative(lambda1, "lambda1");
    check_nonnegative(lambda2, "lambda2");
    check_nonnegative(lambda3, "lambda3");
    check_nonnegative(beta_start, "beta_start");
    check_nonnegative(beta_end, "beta_end");
    if (num_bins < 2) {
        throw RangeError("config: M must be >= 2");
    }
    if (total_iters < 1) {
        throw RangeError("config: K must be >= 1");
    }
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig config;

    // An empty (or whitespace-only) file selects every default.
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        config.validate();
        return config;
    }

    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) {
        throw ParseError("config: top level must be an object");
    }

    static const std::set<std::string> known = {
        "num_classes", "delta_t", "delta_0", "alpha_t", "alpha",   "lambda_d", "M",
        "beta_start",  "beta_end", "K",       "lambda1", "lambda2", "lambda3",  "seed"};
    for (const auto& [key, value] : j.items()) {
        if (known.find(key) == known.end()) {
            throw ParseError("config: unknown key '" + key + "'");
        }
    }

    try {
        if (j.contains("num_classes")) config.num_classes = j.at("num_classes").get<int>();
        if (j.contains("delta_t")) config.delta_t = j.at("delta_t").get<double>();
        if (j.contains("delta_0")) config.delta_0 = j.at("delta_0").get<double>();
        if (j.contains("alpha_t")) config.alpha_t = j.at("alpha_t").get<double>();
        if (j.contains("alpha")) config.alpha = j.at("alpha").get<double>();
        if (j.contains("lambda_d")) config.lambda_d = j.at("lambda_d").get<double>();
        if (j.contains("M")) config.num_bins = j.at("M").get<int>();
        if (j.contains("beta_start")) config.beta_start = j.at("beta_start").get<double>();
        if (j.contains("beta_end")) config.beta_end = j.at("beta_end").get<double>();
        if (j.contains("K")) config.total_iters = j.at("K").get<std::int64_t>();
        if (j.contains("lambda1")) config.lambda1 = j.at("lambda1").get<double>();
        if (j.contains("lambda2")) config.lambda2 = j.at("lambda2").get<double>();
        if (j.contains("lambda3")) config.lambda3 = j.at("lambda3").get<double>();
        if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }

    config.validate();
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open '" + path.string() + "'");
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

ThresholdState make_threshold_state(const RunConfig& config) {
    config.validate();
    ThresholdState state;
    state.delta_t = config.delta_t;
    state.per_class.assign(static_cast<std::size_t>(config.num_classes), config.delta_0);
    state.alpha_t = config.alpha_t;
    state.beta_start = config.beta_start;
    state.beta_end = config.beta_end;
    state.total_iters = config.total_iters;
    state.iter = 0;
    state.num_bins = config.num_bins;
    return state;
}

LossWeights make_loss_weights(const RunConfig& config) {
    LossWeights w;
    w.lambda1 = config.lambda1;
    w.lambda2 = config.lambda2;
    w.lambda3 = config.lambda3;
    w.lambda_d = config.lambda_d;
    w.validate();
    return w;
}

}  // namespace xda
