#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "xda/config.hpp"
#include "xda/io.hpp"
#include "xda/tensor_file.hpp"

using namespace xda;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("xda_io_test_" + name);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

ThresholdState random_state(std::mt19937_64& rng) {
    ThresholdState s;
    s.delta_t = oracles::uniform(rng, 0, 1);
    s.alpha_t = oracles::uniform(rng, 0, 1);
    s.beta_start = oracles::uniform(rng, 0, 2);
    s.beta_end = oracles::uniform(rng, 0, 2);
    s.total_iters = 1 + static_cast<std::int64_t>(rng() % 100000);
    s.iter = static_cast<std::int64_t>(rng() % 1000);
    s.num_bins = 2 + static_cast<int>(rng() % 50);
    const int classes = 1 + static_cast<int>(rng() % 10);
    s.per_class.resize(static_cast<std::size_t>(classes));
    for (double& d : s.per_class) {
        d = oracles::uniform(rng, 0, 1);
    }
    return s;
}

Tensor random_tensor(std::mt19937_64& rng) {
    Tensor t;
    t.dtype = (rng() & 1) ? Dtype::f32 : Dtype::f64;
    const int rank = 1 + static_cast<int>(rng() % 4);
    std::size_t total = 1;
    for (int i = 0; i < rank; ++i) {
        const std::uint32_t d = 1 + static_cast<std::uint32_t>(rng() % 5);
        t.dims.push_back(d);
        total *= d;
    }
    for (std::size_t i = 0; i < total; ++i) {
        double v = oracles::uniform(rng, -100, 100);
        if (t.dtype == Dtype::f32) {
            v = static_cast<double>(static_cast<float>(v));  // representable exactly
        }
        t.data.push_back(v);
    }
    return t;
}

DumpImage random_dump_image(std::mt19937_64& rng, int index) {
    DumpImage image;
    image.batch.image_id = "img-" + std::to_string(index);
    image.batch.image_size = {640, 480};
    image.conf_semantics = (rng() & 1) ? "objectness*class" : "objectness";
    const int n = static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
        Detection d;
        d.bbox.x1 = oracles::uniform(rng, 0, 600);
        d.bbox.y1 = oracles::uniform(rng, 0, 440);
        d.bbox.x2 = d.bbox.x1 + oracles::uniform(rng, 1, 40);
        d.bbox.y2 = d.bbox.y1 + oracles::uniform(rng, 1, 40);
        d.conf = oracles::uniform(rng, 0, 1);
        d.class_scores = {oracles::uniform(rng, 0, 1), oracles::uniform(rng, 0, 1),
                          oracles::uniform(rng, 0, 1)};
        image.batch.detections.push_back(std::move(d));
    }
    return image;
}

}  // namespace

TEST_CASE("an empty config file yields the stock defaults") {
    const RunConfig c = parse_config_text("  \n\t ");
    CHECK(c.lambda_d == 0.1);
    CHECK(c.delta_t == 0.2);
    CHECK(c.delta_0 == 0.8);
    CHECK(c.alpha == 0.9996);
    CHECK(c.alpha_t == 0.9999);
    CHECK(c.num_bins == 20);
    CHECK(c.beta_start == 1.0);
    CHECK(c.beta_end == 0.85);
    CHECK(c.lambda1 == 1.0);
    CHECK(c.lambda2 == 1.0);
    CHECK(c.lambda3 == 1.0);

    const RunConfig braces = parse_config_text("{}");
    CHECK(braces.lambda_d == 0.1);
}

TEST_CASE("config parsing is strict") {
    CHECK_THROWS_AS(parse_config_text("{\"delta_T\": 0.3}"), ParseError);   // typo'd key
    CHECK_THROWS_AS(parse_config_text("{\"delta_t\": 1.5}"), RangeError);   // bad range
    CHECK_THROWS_AS(parse_config_text("{\"M\": 1}"), RangeError);
    CHECK_THROWS_AS(parse_config_text("{\"delta_t\": \"low\"}"), ParseError);
    CHECK_THROWS_AS(parse_config_text("[1,2]"), ParseError);
    CHECK_THROWS_AS(parse_config_text("{\"delta_t\":"), ParseError);

    const RunConfig c = parse_config_text("{\"delta_t\": 0.25, \"K\": 500}");
    CHECK(c.delta_t == 0.25);
    CHECK(c.total_iters == 500);
    CHECK(c.alpha == 0.9996);  // untouched default
}

TEST_CASE("make_threshold_state mirrors the config") {
    RunConfig c;
    c.num_classes = 3;
    c.delta_0 = 0.75;
    c.total_iters = 4000;
    const ThresholdState s = make_threshold_state(c);
    CHECK(s.num_classes() == 3);
    CHECK(s.per_class == std::vector<double>{0.75, 0.75, 0.75});
    CHECK(s.iter == 0);
    CHECK(s.total_iters == 4000);
}

TEST_CASE("state files round-trip byte for byte") {
    std::mt19937_64 rng(61);
    const auto path = temp_path("state.json");
    for (int trial = 0; trial < 100; ++trial) {
        const ThresholdState s = random_state(rng);
        save_state(path, s);
        const std::string first = slurp(path);
        const ThresholdState loaded = load_state(path);
        save_state(path, loaded);
        CHECK(slurp(path) == first);

        CHECK(loaded.per_class == s.per_class);
        CHECK(loaded.iter == s.iter);
        CHECK(loaded.total_iters == s.total_iters);
        CHECK(loaded.delta_t == s.delta_t);
        CHECK(loaded.alpha_t == s.alpha_t);
        CHECK(loaded.num_bins == s.num_bins);
    }
    std::filesystem::remove(path);
}

TEST_CASE("state parsing rejects malformed content") {
    CHECK_THROWS_AS(state_from_text("{"), ParseError);
    CHECK_THROWS_AS(state_from_text("{\"version\":2}"), ParseError);
    CHECK_THROWS_AS(
        state_from_text(R"({"version":1,"k":0,"K":10,"delta_t":0.2,"alpha_t":0.9,)"
                        R"("beta_start":1.0,"beta_end":0.85,"M":20,"per_class":[]})"),
        ParseError);
    // out-of-order class list
    CHECK_THROWS_AS(
        state_from_text(R"({"version":1,"k":0,"K":10,"delta_t":0.2,"alpha_t":0.9,)"
                        R"("beta_start":1.0,"beta_end":0.85,"M":20,)"
                        R"("per_class":[{"class":1,"delta":0.5}]})"),
        ParseError);
    // invariant violation surfaces as RangeError
    CHECK_THROWS_AS(
        state_from_text(R"({"version":1,"k":0,"K":10,"delta_t":1.7,"alpha_t":0.9,)"
                        R"("beta_start":1.0,"beta_end":0.85,"M":20,)"
                        R"("per_class":[{"class":0,"delta":0.5}]})"),
        RangeError);
    // unknown key
    CHECK_THROWS_AS(
        state_from_text(R"({"version":1,"k":0,"K":10,"delta_t":0.2,"alpha_t":0.9,)"
                        R"("beta_start":1.0,"beta_end":0.85,"M":20,"delta0":0.8,)"
                        R"("per_class":[{"class":0,"delta":0.5}]})"),
        ParseError);
}

TEST_CASE("tensor files round-trip byte for byte across dtypes") {
    std::mt19937_64 rng(62);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor t = random_tensor(rng);
        const std::string first = encode_tensor(t);
        const Tensor decoded = decode_tensor(first);
        CHECK(decoded.dtype == t.dtype);
        CHECK(decoded.dims == t.dims);
        CHECK(decoded.data == t.data);  // 0 ULP
        CHECK(encode_tensor(decoded) == first);
    }
}

TEST_CASE("tensor reader rejects corrupted files") {
    Tensor t;
    t.dtype = Dtype::f64;
    t.dims = {2, 2};
    t.data = {1, 2, 3, 4};
    std::string good = encode_tensor(t);

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_tensor(bad_magic), ParseError);

    std::string bad_version = good;
    bad_version[4] = 9;
    CHECK_THROWS_AS(decode_tensor(bad_version), ParseError);

    std::string truncated = good.substr(0, good.size() - 3);
    CHECK_THROWS_AS(decode_tensor(truncated), ParseError);

    std::string trailing = good + "zz";
    CHECK_THROWS_AS(decode_tensor(trailing), ParseError);

    std::string bad_dtype = good;
    bad_dtype[6] = 7;
    CHECK_THROWS_AS(decode_tensor(bad_dtype), ParseError);

    Tensor mismatch;
    mismatch.dims = {3};
    mismatch.data = {1, 2};
    CHECK_THROWS_AS(encode_tensor(mismatch), ShapeMismatch);
}

TEST_CASE("decoders survive random corruption without crashing") {
    std::mt19937_64 rng(64);

    Tensor t;
    t.dtype = Dtype::f64;
    t.dims = {3, 4};
    t.data.assign(12, 1.5);
    const std::string tensor_bytes = encode_tensor(t);

    const std::string state_text = state_to_text(ThresholdState{
        0.2, {0.8, 0.7}, 0.9999, 1.0, 0.85, 1000, 3, 20});

    for (int trial = 0; trial < 2000; ++trial) {
        // bit flips and truncations over both a binary and a JSON artifact
        std::string bytes = (trial & 1) ? tensor_bytes : state_text;
        const int mutations = 1 + static_cast<int>(rng() % 4);
        for (int m = 0; m < mutations; ++m) {
            if (bytes.empty()) {
                break;
            }
            const std::size_t pos = rng() % bytes.size();
            switch (rng() % 3) {
                case 0:
                    bytes[pos] = static_cast<char>(rng());
                    break;
                case 1:
                    bytes = bytes.substr(0, pos);
                    break;
                default:
                    bytes.insert(pos, 1, static_cast<char>(rng()));
                    break;
            }
        }
        try {
            if (trial & 1) {
                (void)decode_tensor(bytes);
            } else {
                (void)state_from_text(bytes);
            }
        } catch (const Error&) {
            // ParseError or RangeError is the contract; anything else aborts
        }
    }
    CHECK(true);  // reaching here means no crash and no foreign exception
}

TEST_CASE("tensor bridges preserve shapes") {
    FeatureMap f = FeatureMap::zeros(8, 2, 3, 4);
    for (std::size_t i = 0; i < f.data.size(); ++i) {
        f.data[i] = static_cast<double>(i);
    }
    const Tensor t = tensor_from_feature_map(f);
    CHECK(t.dims == std::vector<std::uint32_t>{2, 3, 4});
    const FeatureMap back = feature_map_from_tensor(t, 8);
    CHECK(back.data == f.data);
    CHECK(back.stride == 8);

    CHECK_THROWS_AS(feature_map_from_tensor(tensor_from_saliency(SaliencyMatrix::zeros(1, 2, 2))),
                    ShapeMismatch);
}

TEST_CASE("detection dumps round-trip byte for byte") {
    std::mt19937_64 rng(63);
    const auto path = temp_path("dump.jsonl");
    std::vector<DumpImage> images;
    for (int i = 0; i < 100; ++i) {
        images.push_back(random_dump_image(rng, i));
    }
    write_detection_dump(path, images);
    const std::string first = slurp(path);
    const std::vector<DumpImage> loaded = read_detection_dump(path);
    REQUIRE(loaded.size() == images.size());
    write_detection_dump(path, loaded);
    CHECK(slurp(path) == first);

    for (std::size_t i = 0; i < images.size(); ++i) {
        CHECK(loaded[i].batch.image_id == images[i].batch.image_id);
        CHECK(loaded[i].conf_semantics == images[i].conf_semantics);
        REQUIRE(loaded[i].batch.detections.size() == images[i].batch.detections.size());
        for (std::size_t j = 0; j < images[i].batch.detections.size(); ++j) {
            CHECK(loaded[i].batch.detections[j].conf == images[i].batch.detections[j].conf);
            CHECK(loaded[i].batch.detections[j].class_scores ==
                  images[i].batch.detections[j].class_scores);
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("dump parsing rejects unknown keys and bad values") {
    CHECK_THROWS_AS(parse_dump_image_line("{\"image_id\":\"a\"}"), ParseError);
    CHECK_THROWS_AS(
        parse_dump_image_line(R"({"image_id":"a","width":640,"height":640,)"
                              R"("conf_semantics":"x","detections":[],"extra":1})"),
        ParseError);
    CHECK_THROWS_AS(
        parse_dump_image_line(R"({"image_id":"a","width":0,"height":640,)"
                              R"("conf_semantics":"x","detections":[]})"),
        ParseError);
    CHECK_THROWS_AS(
        parse_dump_image_line(R"({"image_id":"a","width":640,"height":640,)"
                              R"("conf_semantics":"x","detections":)"
                              R"([{"x1":0,"y1":0,"x2":1,"y2":1,"conf":1e999,"scores":[]}]})"),
        ParseError);
}

TEST_CASE("label sets round-trip") {
    PseudoLabelSet set;
    set.image_id = "img-9";
    PseudoLabel label;
    label.detection.bbox = {1, 2, 3, 4};
    label.detection.conf = 0.875;
    label.detection.class_scores = {0.1, 0.875};
    label.assigned_class = 1;
    label.one_hot = {0.0, 1.0};
    set.labels.push_back(label);

    const std::string line = label_set_line(set);
    const PseudoLabelSet back = parse_label_set_line(line);
    CHECK(back.image_id == set.image_id);
    REQUIRE(back.labels.size() == 1);
    CHECK(back.labels[0].assigned_class == 1);
    CHECK(back.labels[0].one_hot == label.one_hot);
    CHECK(back.labels[0].detection.conf == 0.875);
    CHECK(label_set_line(back) == line);

    const auto path = temp_path("labels.jsonl");
    write_label_sets(path, std::vector<PseudoLabelSet>{set});
    const auto loaded = read_label_sets(path);
    REQUIRE(loaded.size() == 1);
    CHECK(label_set_line(loaded[0]) == line);
    std::filesystem::remove(path);
}

TEST_CASE("scenario parsing applies defaults and checks consistency") {
    const std::string text = R"({
        "config": {"alpha_t": 0.98, "seed": 42, "K": 5000},
        "image": {"width": 640, "height": 640},
        "num_images": 100,
        "profiles": [
            {"class": 0, "tp_conf": {"dist": "beta", "a": 40, "b": 8},
             "fp_conf": {"dist": "beta", "a": 2, "b": 6},
             "tp_rate": 2.0, "fp_rate": 2.0, "box_size": [32, 128]},
            {"class": 1, "tp_conf": {"dist": "uniform", "lo": 0.4, "hi": 0.8},
             "fp_conf": {"dist": "beta", "a": 2, "b": 6},
             "tp_rate": 1.0, "fp_rate": 0.5, "box_size": [16, 64]}
        ]
    })";
    const ScenarioConfig s = parse_scenario_text(text);
    CHECK(s.config.num_classes == 2);  // inferred from the profiles
    CHECK(s.config.alpha_t == 0.98);
    CHECK(s.config.seed == 42);
    CHECK(s.num_images == 100);
    CHECK(s.profiles[1].tp_conf.kind == ConfDistribution::Kind::uniform);
    CHECK(s.static_thresholds == std::vector<double>{0.5, 0.6, 0.7, 0.8, 0.9});

    CHECK_THROWS_AS(parse_scenario_text("{\"profiles\": []}"), ParseError);
    CHECK_THROWS_AS(parse_scenario_text(R"({"config": {"num_classes": 3}, "profiles": [
        {"class": 0, "tp_conf": {"dist": "beta", "a": 2, "b": 2},
         "fp_conf": {"dist": "beta", "a": 2, "b": 2},
         "tp_rate": 1, "fp_rate": 1, "box_size": [16, 64]}]})"),
                    ParseError);
}

TEST_CASE("trajectory CSV lists one row per iteration and class") {
    EvalReport report;
    report.trajectory = {{0.8, 0.7}, {0.81, 0.69}};
    const std::string csv = trajectory_csv_text(report);
    CHECK(csv.substr(0, 22) == "iteration,class,delta\n");
    CHECK(csv.find("1,0,0.80000000000000004") != std::string::npos);
    CHECK(csv.find("2,1,0.68999999999999995") != std::string::npos);
}
