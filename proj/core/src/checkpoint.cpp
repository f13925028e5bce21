#include "scbridge/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "scbridge/errors.hpp"

namespace scbridge {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr std::array<char, 8> kMagic{'S', 'C', 'B', 'P', 'A', 'R', 'A', 'M'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw DataError("checkpoint: unexpected end of stream");
    }
    return value;
}

void write_block(std::ostream& out, const Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_block(std::istream& in, Matrix& m) {
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) {
        throw DataError("checkpoint: truncated parameter block");
    }
}

void write_param(std::ostream& out, const Param& p) {
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p.rows()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p.cols()));
    write_block(out, p.value);
    write_block(out, p.first_moment);
    write_block(out, p.second_moment);
}

Param read_param(std::istream& in) {
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    if (rows > (1u << 24) || cols > (1u << 24)) {
        throw DataError("checkpoint: implausible tensor shape");
    }
    Param p(Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)));
    read_block(in, p.value);
    read_block(in, p.first_moment);
    read_block(in, p.second_moment);
    return p;
}

}  // namespace

void save_parameters(std::ostream& out, const ParameterSet& params) {
    out.write(kMagic.data(), kMagic.size());
    write_pod<std::uint32_t>(out, kVersion);
    write_pod<std::uint64_t>(out, params.step_count);
    write_pod<std::uint64_t>(out, params.layers.size());
    write_pod<std::uint64_t>(out, params.embeddings.size());
    params.for_each([&](const Param& p) { write_param(out, p); });
    if (!out) {
        throw DataError("checkpoint: write failed");
    }
}

ParameterSet load_parameters(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) {
        throw DataError("checkpoint: bad magic, not a parameter file");
    }
    if (read_pod<std::uint32_t>(in) != kVersion) {
        throw DataError("checkpoint: unsupported format version");
    }
    ParameterSet params;
    params.step_count = read_pod<std::uint64_t>(in);
    const auto n_layers = read_pod<std::uint64_t>(in);
    const auto n_embeddings = read_pod<std::uint64_t>(in);
    if (n_layers > 1024 || n_embeddings > 1024) {
        throw DataError("checkpoint: implausible tensor count");
    }
    for (std::uint64_t k = 0; k < n_layers; ++k) {
        Param w = read_param(in);
        Param b = read_param(in);
        if (b.rows() != 1 || b.cols() != w.cols()) {
            throw DataError("checkpoint: bias shape does not match weight");
        }
        params.layers.push_back(DenseLayer{std::move(w), std::move(b)});
    }
    for (std::uint64_t k = 0; k < n_embeddings; ++k) {
        params.embeddings.push_back(read_param(in));
    }
    return params;
}

}  // namespace scbridge
