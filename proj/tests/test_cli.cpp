// End-to-end checks of the command-line surface, driving the built binary.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "oracles.hpp"
#include "xda/io.hpp"
#include "xda/tensor_file.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = XDA_CLI_PATH;
const std::string kScenarioDir = XDA_SCENARIO_DIR;

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("xda_cli_test_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " >/dev/null 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text(const std::string& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace

TEST_CASE("select over an empty dump writes no labels and advances k per image") {
    TempDir dir;
    // an image with no detections still counts as one iteration
    write_text(dir.file("dump.jsonl"),
               R"({"image_id":"a","width":640,"height":640,"conf_semantics":"objectness",)"
               R"("detections":[]})"
               "\n");
    xda::ThresholdState state;
    state.per_class = {0.8, 0.8};
    xda::save_state(dir.file("state.json"), state);

    const int rc = run("select --dump " + dir.file("dump.jsonl") + " --state " +
                       dir.file("state.json") + " --out " + dir.file("labels.jsonl"));
    CHECK(rc == 0);
    const auto sets = xda::read_label_sets(dir.file("labels.jsonl"));
    REQUIRE(sets.size() == 1);
    CHECK(sets[0].labels.empty());
    xda::ThresholdState updated = xda::load_state(dir.file("state.json"));
    CHECK(updated.iter == 1);
    CHECK(updated.per_class == std::vector<double>{0.8, 0.8});

    // a dump with no lines at all processes zero iterations
    write_text(dir.file("none.jsonl"), "");
    CHECK(run("select --dump " + dir.file("none.jsonl") + " --state " + dir.file("state.json") +
              " --out " + dir.file("labels2.jsonl")) == 0);
    updated = xda::load_state(dir.file("state.json"));
    CHECK(updated.iter == 1);
    CHECK(slurp(dir.file("labels2.jsonl")).empty());
}

TEST_CASE("select filters a small dump through the two-step rule") {
    TempDir dir;
    // one image, one class; state has delta_t 0.2, per-class 0.8, alpha_t 0.5
    write_text(dir.file("dump.jsonl"),
               R"({"image_id":"a","width":640,"height":640,"conf_semantics":"objectness*class",)"
               R"("detections":[{"x1":0,"y1":0,"x2":10,"y2":10,"conf":0.1,"scores":[0.1]},)"
               R"({"x1":0,"y1":0,"x2":10,"y2":10,"conf":0.82,"scores":[0.82]},)"
               R"({"x1":0,"y1":0,"x2":10,"y2":10,"conf":0.83,"scores":[0.83]},)"
               R"({"x1":0,"y1":0,"x2":10,"y2":10,"conf":0.84,"scores":[0.84]},)"
               R"({"x1":0,"y1":0,"x2":10,"y2":10,"conf":0.9,"scores":[0.9]}]})"
               "\n");
    xda::ThresholdState state;
    state.per_class = {0.8};
    state.alpha_t = 0.5;
    state.beta_start = state.beta_end = 1.0;
    xda::save_state(dir.file("state.json"), state);

    const int rc = run("select --dump " + dir.file("dump.jsonl") + " --state " +
                       dir.file("state.json") + " --out " + dir.file("labels.jsonl") +
                       " --state-out " + dir.file("state2.json"));
    CHECK(rc == 0);

    // histogram peak (0.80,0.85] -> 0.85; threshold 0.5*0.8+0.5*0.85 = 0.825
    const xda::ThresholdState updated = xda::load_state(dir.file("state2.json"));
    CHECK(updated.iter == 1);
    CHECK(updated.per_class[0] == doctest::Approx(0.825).epsilon(1e-12));

    const auto sets = xda::read_label_sets(dir.file("labels.jsonl"));
    REQUIRE(sets.size() == 1);
    REQUIRE(sets[0].labels.size() == 3);  // 0.83, 0.84, 0.9 survive the updated threshold
    CHECK(sets[0].labels[0].detection.conf == 0.83);
    CHECK(sets[0].labels[1].detection.conf == 0.84);
    CHECK(sets[0].labels[2].detection.conf == 0.9);
}

TEST_CASE("select chains threshold state across invocations") {
    TempDir dir;
    const std::string line =
        R"({"image_id":"a","width":640,"height":640,"conf_semantics":"objectness",)"
        R"("detections":[{"x1":0,"y1":0,"x2":10,"y2":10,"conf":0.83,"scores":[0.83]}]})";
    write_text(dir.file("dump.jsonl"), line + "\n" + line + "\n");
    xda::ThresholdState state;
    state.per_class = {0.8};
    state.alpha_t = 0.9;
    state.beta_start = state.beta_end = 1.0;
    xda::save_state(dir.file("state.json"), state);

    // two invocations of two images each = four iterations in total
    for (int i = 0; i < 2; ++i) {
        CHECK(run("select --dump " + dir.file("dump.jsonl") + " --state " +
                  dir.file("state.json") + " --out " + dir.file("labels.jsonl")) == 0);
    }
    const xda::ThresholdState updated = xda::load_state(dir.file("state.json"));
    CHECK(updated.iter == 4);
    // every iteration pulls the threshold toward the 0.85 mode endpoint
    double expected = 0.8;
    for (int k = 0; k < 4; ++k) {
        expected = 0.9 * expected + 0.1 * 0.85;
    }
    CHECK(updated.per_class[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("select rejects malformed dumps with exit code 2") {
    TempDir dir;
    write_text(dir.file("dump.jsonl"),
               R"({"image_id":"a","width":640,"height":640,"conf_semantics":"x",)"
               R"("detections":[{"x1":0,"y1":0,"x2":10,"y2":10,"conf":1.4,"scores":[1.0]}]})"
               "\n");
    xda::ThresholdState state;
    state.per_class = {0.8};
    xda::save_state(dir.file("state.json"), state);
    const int rc = run("select --dump " + dir.file("dump.jsonl") + " --state " +
                       dir.file("state.json") + " --out " + dir.file("labels.jsonl"));
    CHECK(rc == 2);
}

TEST_CASE("usage errors exit with code 1") {
    CHECK(run("select --dump only") == 1);
    CHECK(run("no-such-command") == 1);
}

TEST_CASE("saliency then reweight over tensor files") {
    TempDir dir;
    xda::PseudoLabelSet set;
    set.image_id = "a";
    xda::PseudoLabel label;
    label.detection.bbox = {0, 0, 32, 32};
    label.detection.conf = 0.9;
    label.detection.class_scores = {0.9};
    label.assigned_class = 0;
    label.one_hot = {1.0};
    set.labels.push_back(label);
    xda::write_label_sets(dir.file("labels.jsonl"), std::vector<xda::PseudoLabelSet>{set});

    CHECK(run("saliency --labels " + dir.file("labels.jsonl") +
              " --stride 32 --grid 2x2 --out " + dir.file("m.vttn")) == 0);
    const xda::Tensor m = xda::read_tensor(dir.file("m.vttn"));
    CHECK(m.dims == std::vector<std::uint32_t>{2, 2});
    CHECK(m.data == std::vector<double>{0.9, 0.0, 0.0, 0.0});

    // --gt pins covered cells at 1
    CHECK(run("saliency --labels " + dir.file("labels.jsonl") +
              " --stride 32 --grid 2x2 --gt --out " + dir.file("gt.vttn")) == 0);
    CHECK(xda::read_tensor(dir.file("gt.vttn")).data == std::vector<double>{1.0, 0, 0, 0});

    xda::Tensor f;
    f.dtype = xda::Dtype::f64;
    f.dims = {1, 2, 2};
    f.data = {1.0, 2.0, 3.0, 4.0};
    xda::write_tensor(dir.file("f.vttn"), f);
    CHECK(run("reweight --features " + dir.file("f.vttn") + " --saliency " + dir.file("m.vttn") +
              " --out " + dir.file("out.vttn")) == 0);
    const xda::Tensor out = xda::read_tensor(dir.file("out.vttn"));
    CHECK(out.data == std::vector<double>{0.9 * 1.0 + 1.0, 2.0, 3.0, 4.0});

    // mismatched grid
    xda::Tensor wrong = f;
    wrong.dims = {1, 1, 4};
    xda::write_tensor(dir.file("wrong.vttn"), wrong);
    CHECK(run("reweight --features " + dir.file("wrong.vttn") + " --saliency " +
              dir.file("m.vttn") + " --out " + dir.file("x.vttn")) == 2);
}

TEST_CASE("ema with alpha 1 reproduces the teacher file byte for byte") {
    TempDir dir;
    xda::Tensor teacher;
    teacher.dtype = xda::Dtype::f32;
    teacher.dims = {4};
    teacher.data = {1.0f, 2.5f, -3.0f, 0.125f};
    xda::write_tensor(dir.file("t.vttn"), teacher);
    xda::Tensor student = teacher;
    student.data = {0.0, 0.0, 0.0, 0.0};
    xda::write_tensor(dir.file("s.vttn"), student);

    CHECK(run("ema --teacher " + dir.file("t.vttn") + " --student " + dir.file("s.vttn") +
              " --alpha 1 --out " + dir.file("o.vttn")) == 0);
    CHECK(slurp(dir.file("o.vttn")) == slurp(dir.file("t.vttn")));

    CHECK(run("ema --teacher " + dir.file("t.vttn") + " --student " + dir.file("s.vttn") +
              " --alpha 0.5 --out " + dir.file("h.vttn")) == 0);
    const xda::Tensor half = xda::read_tensor(dir.file("h.vttn"));
    CHECK(half.data[0] == 0.5);
}

TEST_CASE("disc-init and losses produce the expected breakdown") {
    TempDir dir;
    xda::Tensor f;
    f.dtype = xda::Dtype::f64;
    f.dims = {2, 2, 2};
    f.data = {0.5, -0.5, 0.25, 1.0, -1.0, 0.75, 0.0, 0.3};
    xda::write_tensor(dir.file("f.vttn"), f);

    xda::Tensor m;
    m.dtype = xda::Dtype::f64;
    m.dims = {2, 2};
    m.data = {0.0, 0.0, 0.0, 0.0};
    xda::write_tensor(dir.file("m.vttn"), m);

    CHECK(run("disc-init --features " + dir.file("f.vttn") + " --out " + dir.file("d.vttn")) ==
          0);
    const xda::Tensor d = xda::read_tensor(dir.file("d.vttn"));
    CHECK(d.dims == std::vector<std::uint32_t>{6});  // 2*(C=2)+2 per scale

    const std::string cmd = kCli + " losses --features " + dir.file("f.vttn") + " --saliency " +
                            dir.file("m.vttn") + " --disc " + dir.file("d.vttn") +
                            " --domain target --l-sup 2 --l-unsup 3 > " + dir.file("out.json");
    REQUIRE(std::system(cmd.c_str()) == 0);
    const std::string text = slurp(dir.file("out.json"));
    // zero heads emit probability one half everywhere: image ln2, instance
    // 4 ln2, consensus 0; total = 5 + 0.1 * 5 ln2
    CHECK(text.find("\"image_loss\":0.693147") != std::string::npos);
    CHECK(text.find("\"instance_loss\":2.772588") != std::string::npos);
    CHECK(text.find("\"consensus_loss\":0.0") != std::string::npos);
    CHECK(text.find("\"total\":5.346573") != std::string::npos);
}

TEST_CASE("losses --grads writes the combined feature gradient per scale") {
    TempDir dir;
    xda::FeatureMap f = xda::FeatureMap::zeros(1, 2, 2, 2);
    f.data = {0.5, -0.5, 0.25, 1.0, -1.0, 0.75, 0.0, 0.3};
    xda::write_tensor(dir.file("f.vttn"), xda::tensor_from_feature_map(f));

    xda::SaliencyMatrix m = xda::SaliencyMatrix::zeros(1, 2, 2);
    m.grid = {0.9, 0.0, 0.4, 0.0};
    xda::write_tensor(dir.file("m.vttn"), xda::tensor_from_saliency(m));

    CHECK(run("disc-init --features " + dir.file("f.vttn") + " --value 0.3 --out " +
              dir.file("d.vttn")) == 0);
    CHECK(run("losses --features " + dir.file("f.vttn") + " --saliency " + dir.file("m.vttn") +
              " --disc " + dir.file("d.vttn") + " --domain target --grads " +
              dir.file("g")) == 0);

    // recompute the same composition through the library
    xda::DiscriminatorHead head;
    head.weights = {0.3, 0.3};
    head.bias = 0.3;
    xda::Discriminator disc;
    disc.image_heads = {head};
    disc.instance_heads = {head};
    const std::vector<xda::FeatureMap> features = {f};
    const std::vector<xda::FeatureMap> reweighted = {xda::reweight_features(f, m)};
    const double lambda_d = 0.1;
    const auto img = xda::image_domain_loss(features, disc, xda::Domain::target, lambda_d);
    const auto ins = xda::instance_domain_loss(reweighted, disc, xda::Domain::target, lambda_d);
    const auto con = xda::consensus_loss(features, reweighted, disc);
    xda::FeatureMap expected = xda::reweight_backward(ins.feature_grads[0], m);
    const xda::FeatureMap con_chained = xda::reweight_backward(con.reweighted_feature_grads[0], m);
    for (std::size_t i = 0; i < expected.data.size(); ++i) {
        expected.data[i] += img.feature_grads[0].data[i] +
                            lambda_d * (con.feature_grads[0].data[i] + con_chained.data[i]);
    }
    const xda::Tensor written = xda::read_tensor(dir.file("g") + ".s0.vttn");
    CHECK(written.dims == std::vector<std::uint32_t>{2, 2, 2});
    CHECK(written.data == expected.data);
}

TEST_CASE("gradcheck exits zero on the stock suite") {
    CHECK(run("gradcheck --instances 5 --seed 11") == 0);
}

TEST_CASE("simulate is deterministic across runs") {
    TempDir dir;
    const std::string scenario = kScenarioDir + "/heterogeneous.json";
    const std::string base = "simulate --scenario " + scenario + " --iters 300";
    CHECK(run(base + " --out " + dir.file("r1.json") + " --csv " + dir.file("t1.csv")) == 0);
    CHECK(run(base + " --out " + dir.file("r2.json") + " --csv " + dir.file("t2.csv")) == 0);
    CHECK(oracles::fnv1a(slurp(dir.file("r1.json"))) == oracles::fnv1a(slurp(dir.file("r2.json"))));
    CHECK(oracles::fnv1a(slurp(dir.file("t1.csv"))) == oracles::fnv1a(slurp(dir.file("t2.csv"))));
    CHECK(slurp(dir.file("r1.json")).find("\"rng\": \"mt19937_64/xda-dists-1\"") !=
          std::string::npos);
}
