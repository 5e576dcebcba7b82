#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xda/selection.hpp"
#include "xda/config.hpp"
#include "xda/detection.hpp"
#include "xda/simulator.hpp"

namespace xda {

// One line of a detection dump (JSON Lines, one image per line). The
// conf_semantics string is the producer's declaration of what `conf` holds
// (e.g. "objectness*class" or "objectness"); the selector consumes the value
// as given.
struct DumpImage {
    PredictionBatch batch;
    std::string conf_semantics;
};

std::vector<DumpImage> read_detection_dump(const std::filesystem::path& path);
void write_detection_dump(const std::filesystem::path& path, std::span<const DumpImage> images);
std::string dump_image_line(const DumpImage& image);
DumpImage parse_dump_image_line(const std::string& line);

// Pseudo-label files (JSON Lines, one image per line). Lossless: scores ride
// along so a label file can be re-read into full detections.
std::vector<PseudoLabelSet> read_label_sets(const std::filesystem::path& path);
void write_label_sets(const std::filesystem::path& path, std::span<const PseudoLabelSet> sets);
std::string label_set_line(const PseudoLabelSet& set);
PseudoLabelSet parse_label_set_line(const std::string& line);

// Threshold state persistence (single JSON object, canonical key order, so
// save(load(p)) reproduces the file byte for byte).
ThresholdState load_state(const std::filesystem::path& path);
void save_state(const std::filesystem::path& path, const ThresholdState& state);
std::string state_to_text(const ThresholdState& state);
ThresholdState state_from_text(const std::string& text);

// Simulation scenario: run hyperparameters plus per-class difficulty
// profiles. Strict parse; profiles must cover classes 0..n-1 in order.
struct ScenarioConfig {
    RunConfig config;
    ImageSize image_size{640, 640};
    int num_images = 1000;
    std::vector<ClassProfile> profiles;
    std::vector<double> static_thresholds{0.5, 0.6, 0.7, 0.8, 0.9};
};

ScenarioConfig load_scenario(const std::filesystem::path& path);
ScenarioConfig parse_scenario_text(const std::string& text);

// Simulation report (JSON) and the flat trajectory CSV that goes with it.
std::string report_to_text(const ScenarioConfig& scenario, const EvalReport& adaptive_report,
                           std::span<const EvalReport> static_reports);
void write_report(const std::filesystem::path& path, const ScenarioConfig& scenario,
                  const EvalReport& adaptive_report, std::span<const EvalReport> static_reports);
std::string trajectory_csv_text(const EvalReport& report);
void write_trajectory_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace xda
