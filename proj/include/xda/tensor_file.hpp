#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xda/errors.hpp"
#include "xda/saliency.hpp"

namespace xda {

// Binary tensor container, little-endian throughout:
//
//   bytes 0..3   magic "VTTN"
//   bytes 4..5   version (u16), currently 1
//   byte  6      dtype tag (u8): 1 = f32, 2 = f64
//   byte  7      rank (u8), >= 1
//   then         rank dims (u32 each), every dim >= 1
//   then         product(dims) elements, row-major
//
// Values live in memory as doubles; the dtype tag is kept so a file read and
// rewritten reproduces its bytes exactly (f32 payloads are exactly
// representable as doubles).
enum class Dtype : std::uint8_t {
    f32 = 1,
    f64 = 2,
};

struct Tensor {
    Dtype dtype = Dtype::f64;
    std::vector<std::uint32_t> dims;
    std::vector<double> data;

    std::size_t element_count() const;
};

Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);

// In-memory encode/decode, used by the file functions and handy in tests.
std::string encode_tensor(const Tensor& tensor);
Tensor decode_tensor(const std::string& bytes);

// Bridges to the domain types. Shape expectations: features are rank 3
// (C, H, W), saliency grids rank 2 (H, W), weight snapshots rank 1.
Tensor tensor_from_feature_map(const FeatureMap& f, Dtype dtype = Dtype::f64);
FeatureMap feature_map_from_tensor(const Tensor& t, int stride = 1);
Tensor tensor_from_saliency(const SaliencyMatrix& m, Dtype dtype = Dtype::f64);
SaliencyMatrix saliency_from_tensor(const Tensor& t, int stride = 1);

}  // namespace xda
