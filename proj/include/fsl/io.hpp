#pragma once

// Checkpoint files, 8-bit PPM/PGM images and flat key=value configuration.

#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fsl/fslnet.hpp"
#include "fsl/optim.hpp"

namespace fsl::io {

/// Unreadable, truncated, corrupted or incompatible files.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    std::variant<Tensor4<float>, Tensor4<double>> value;

    [[nodiscard]] const Shape& shape() const;
};

/// Ordered collection of named tensors, stored in float32 or float64.
class Checkpoint {
public:
    template <typename T>
    void put(const std::string& name, const Tensor4<T>& t);
    void put_scalar(const std::string& name, double v);

    [[nodiscard]] const NamedTensor* find(const std::string& name) const;
    /// Copies a stored tensor into `out`, converting precision if needed.
    /// Throws IoError when absent and ShapeError (naming the tensor) on shape mismatch.
    template <typename T>
    void get(const std::string& name, Tensor4<T>& out) const;
    [[nodiscard]] double scalar(const std::string& name) const;
    [[nodiscard]] bool has(const std::string& name) const { return find(name) != nullptr; }

    [[nodiscard]] const std::vector<NamedTensor>& tensors() const { return tensors_; }

    void save(const std::string& path) const;
    /// Throws IoError on bad magic, version mismatch, truncation or checksum failure.
    static Checkpoint load(const std::string& path);

private:
    std::vector<NamedTensor> tensors_;
};

/// Network config, parameters, batch-norm buffers and (optionally) Adam state.
template <typename T>
Checkpoint pack_network(FSLNet<T>& net, const Adam<T>* adam = nullptr);

NetworkConfig unpack_config(const Checkpoint& ck);

/// Loads every parameter and buffer of `net` from `ck`; Adam state too when `adam` is given.
template <typename T>
void unpack_into(const Checkpoint& ck, FSLNet<T>& net, Adam<T>* adam = nullptr);

template <typename T>
std::unique_ptr<FSLNet<T>> load_network(const std::string& path);

/// RGB (1,3,h,w) in [0,1] as binary P6; values are clamped and rounded.
void write_ppm(const std::string& path, const Tensor4<double>& rgb);
/// One plane (h,w) taken from channel 0 of sample 0, as binary P5.
void write_pgm(const std::string& path, const Tensor4<double>& gray);
/// Both readers return values scaled to [0,1].
Tensor4<double> read_ppm(const std::string& path);
Tensor4<double> read_pgm(const std::string& path);

/// key=value lines; '#' starts a comment; blank lines ignored.
/// Throws std::invalid_argument naming the line on malformed input or repeated keys.
std::map<std::string, std::string> parse_key_values(std::istream& in);
std::map<std::string, std::string> read_key_values(const std::string& path);

}  // namespace fsl::io
