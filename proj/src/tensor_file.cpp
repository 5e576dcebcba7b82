#include "xda/tensor_file.hpp"

#include <bit>
#include <cmath>
#include <fstream>

namespace xda {

namespace {

constexpr char kMagic[4] = {'V', 'T', 'T', 'N'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kMaxElements = std::size_t{1} << 30;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) {
            v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        }
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        }
        return v;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            throw ParseError("tensor file: truncated");
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (std::uint32_t d : dims) {
        n *= d;
    }
    return dims.empty() ? 0 : n;
}

std::string encode_tensor(const Tensor& tensor) {
    if (tensor.dims.empty() || tensor.dims.size() > 255) {
        throw RangeError("tensor: rank must be in 1..255");
    }
    std::size_t expected = 1;
    for (std::uint32_t d : tensor.dims) {
        if (d == 0) {
            throw RangeError("tensor: zero dimension");
        }
        if (expected > kMaxElements / d) {
            throw RangeError("tensor: too many elements");
        }
        expected *= d;
    }
    if (expected != tensor.data.size()) {
        throw ShapeMismatch("tensor: dims imply " + std::to_string(expected) +
                            " elements, data has " + std::to_string(tensor.data.size()));
    }
    if (tensor.dtype != Dtype::f32 && tensor.dtype != Dtype::f64) {
        throw RangeError("tensor: unknown dtype");
    }

    std::string out;
    out.reserve(16 + tensor.data.size() * (tensor.dtype == Dtype::f32 ? 4 : 8));
    out.append(kMagic, 4);
    put_u16(out, kVersion);
    out.push_back(static_cast<char>(tensor.dtype));
    out.push_back(static_cast<char>(tensor.dims.size()));
    for (std::uint32_t d : tensor.dims) {
        put_u32(out, d);
    }
    if (tensor.dtype == Dtype::f32) {
        for (double v : tensor.data) {
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    } else {
        for (double v : tensor.data) {
            put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    return out;
}

Tensor decode_tensor(const std::string& bytes) {
    Reader r(bytes);
    char magic[4];
    for (char& m : magic) {
        m = static_cast<char>(r.u8());
    }
    if (std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
        throw ParseError("tensor file: bad magic");
    }
    const std::uint16_t version = r.u16();
    if (version != kVersion) {
        throw ParseError("tensor file: unsupported version " + std::to_string(version));
    }
    const std::uint8_t dtype_tag = r.u8();
    if (dtype_tag != static_cast<std::uint8_t>(Dtype::f32) &&
        dtype_tag != static_cast<std::uint8_t>(Dtype::f64)) {
        throw ParseError("tensor file: unknown dtype tag " + std::to_string(dtype_tag));
    }
    const std::uint8_t rank = r.u8();
    if (rank == 0) {
        throw ParseError("tensor file: rank 0");
    }

    Tensor t;
    t.dtype = static_cast<Dtype>(dtype_tag);
    std::size_t expected = 1;
    for (int i = 0; i < rank; ++i) {
        const std::uint32_t d = r.u32();
        if (d == 0) {
            throw ParseError("tensor file: zero dimension");
        }
        if (expected > kMaxElements / d) {
            throw ParseError("tensor file: too many elements");
        }
        expected *= d;
        t.dims.push_back(d);
    }
    const std::size_t elem_size = t.dtype == Dtype::f32 ? 4 : 8;
    if (r.remaining() != expected * elem_size) {
        throw ParseError("tensor file: payload size mismatch");
    }
    t.data.reserve(expected);
    if (t.dtype == Dtype::f32) {
        for (std::size_t i = 0; i < expected; ++i) {
            t.data.push_back(static_cast<double>(std::bit_cast<float>(r.u32())));
        }
    } else {
        for (std::size_t i = 0; i < expected; ++i) {
            t.data.push_back(std::bit_cast<double>(r.u64()));
        }
    }
    return t;
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open '" + path.string() + "'");
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensor(bytes);
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
    const std::string bytes = encode_tensor(tensor);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ParseError("cannot write '" + path.string() + "'");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw ParseError("short write to '" + path.string() + "'");
    }
}

Tensor tensor_from_feature_map(const FeatureMap& f, Dtype dtype) {
    Tensor t;
    t.dtype = dtype;
    t.dims = {static_cast<std::uint32_t>(f.channels), static_cast<std::uint32_t>(f.height),
              static_cast<std::uint32_t>(f.width)};
    t.data = f.data;
    return t;
}

FeatureMap feature_map_from_tensor(const Tensor& t, int stride) {
    if (t.dims.size() != 3) {
        throw ShapeMismatch("feature map tensor must have rank 3, got rank " +
                            std::to_string(t.dims.size()));
    }
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw RangeError("feature map tensor holds a non-finite value");
        }
    }
    FeatureMap f;
    f.stride = stride;
    f.channels = static_cast<int>(t.dims[0]);
    f.height = static_cast<int>(t.dims[1]);
    f.width = static_cast<int>(t.dims[2]);
    f.data = t.data;
    return f;
}

Tensor tensor_from_saliency(const SaliencyMatrix& m, Dtype dtype) {
    Tensor t;
    t.dtype = dtype;
    t.dims = {static_cast<std::uint32_t>(m.height), static_cast<std::uint32_t>(m.width)};
    t.data = m.grid;
    return t;
}

SaliencyMatrix saliency_from_tensor(const Tensor& t, int stride) {
    if (t.dims.size() != 2) {
        throw ShapeMismatch("saliency tensor must have rank 2, got rank " +
                            std::to_string(t.dims.size()));
    }
    for (double v : t.data) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw RangeError("saliency tensor entries must lie in [0,1]");
        }
    }
    SaliencyMatrix m;
    m.stride = stride;
    m.height = static_cast<int>(t.dims[0]);
    m.width = static_cast<int>(t.dims[1]);
    m.grid = t.data;
    return m;
}

}  // namespace xda
