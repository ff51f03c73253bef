/**
 * @file volume.hpp
 * @brief Synthetic CT volumes, noise injection and slice-triplet extraction.
 *
 * A Volume is an immutable stack of S slices of M x N voxels in Hounsfield
 * units. Phantoms are random ellipsoids inside a cylindrical body over air;
 * the z semi-axis floor controls how similar adjacent slices are. Noise
 * injectors either honour (gaussian, signal_dependent) or deliberately break
 * (correlated_control) inter-slice independence.
 *
 * All generated HU values lie on a 1/256 HU grid, so clean + noise is exact
 * in 32-bit floats and noisy - clean == noise holds bit for bit.
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "n2c/image.hpp"

namespace n2c {

enum class VolumeKind { clean, noisy, noise, denoised };

std::string to_string(VolumeKind kind);
VolumeKind volume_kind_from_string(const std::string& name);

/// Grid every synthetic HU value is snapped to.
inline constexpr double kHuQuantum = 1.0 / 256.0;
inline constexpr double kHuMin = -2000.0;
inline constexpr double kHuMax = 4000.0;
inline constexpr double kAirHu = -1000.0;

struct VolumeDims {
    std::size_t slices = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    [[nodiscard]] std::size_t voxels() const { return slices * rows * cols; }
    [[nodiscard]] std::size_t slice_size() const { return rows * cols; }
    bool operator==(const VolumeDims&) const = default;
};

struct VolumeGeometry {
    double z_spacing_mm = 1.0;
    double slice_thickness_mm = 1.0;
    double pixel_spacing_mm = 1.0;
    bool operator==(const VolumeGeometry&) const = default;
};

class Volume {
public:
    /// Validates size, finiteness and the HU range.
    Volume(VolumeDims dims, std::vector<float> data, VolumeKind kind, VolumeGeometry geometry = {},
           std::optional<std::uint64_t> seed = std::nullopt);

    [[nodiscard]] const VolumeDims& dims() const { return dims_; }
    [[nodiscard]] std::size_t slices() const { return dims_.slices; }
    [[nodiscard]] std::size_t rows() const { return dims_.rows; }
    [[nodiscard]] std::size_t cols() const { return dims_.cols; }
    [[nodiscard]] VolumeKind kind() const { return kind_; }
    [[nodiscard]] const VolumeGeometry& geometry() const { return geometry_; }
    [[nodiscard]] std::optional<std::uint64_t> seed() const { return seed_; }
    [[nodiscard]] std::span<const float> data() const { return data_; }
    [[nodiscard]] std::span<const float> slice(std::size_t s) const;
    [[nodiscard]] Image slice_image(std::size_t s) const;

    /// Same voxels, different kind / seed tag.
    [[nodiscard]] Volume relabel(VolumeKind kind, std::optional<std::uint64_t> seed) const;

    bool operator==(const Volume&) const = default;

private:
    VolumeDims dims_;
    std::vector<float> data_;
    VolumeKind kind_;
    VolumeGeometry geometry_;
    std::optional<std::uint64_t> seed_;
};

/// Builds a volume from per-slice images (values rounded to float).
Volume volume_from_slices(std::span<const Image> slices, VolumeKind kind, VolumeGeometry geometry = {},
                          std::optional<std::uint64_t> seed = std::nullopt);

struct PhantomSpec {
    VolumeDims dims{64, 64, 64};
    int n_ellipsoids = 8;
    std::array<double, 2> hu_range{-60.0, 60.0}; ///< ellipsoid HU offsets are drawn from this range
    double z_smoothness = 8.0; ///< minimum ellipsoid z semi-axis, in slices
    double body_radius_fraction = 0.85;
    double body_hu = 0.0;
    std::uint64_t seed = 0;
    VolumeGeometry geometry{};
};

void validate(const PhantomSpec& spec);

/// Deterministic per seed. Ellipsoid geometry draws do not depend on z_smoothness,
/// only the z semi-axis (z_smoothness plus a slab-scaled random extent) depends on it.
Volume generate_phantom(const PhantomSpec& spec);

enum class NoiseModel { gaussian, signal_dependent, correlated_control };

std::string to_string(NoiseModel model);
NoiseModel noise_model_from_string(const std::string& name);

struct NoiseSpec {
    NoiseModel model = NoiseModel::gaussian;
    double sigma = 30.0;
    double coupling = 0.0; ///< shared fraction between slices; correlated_control only
    std::uint64_t seed = 0;
};

void validate(const NoiseSpec& spec);

struct NoisyPair {
    Volume noisy;
    Volume noise;
};

NoisyPair add_noise(const Volume& clean, const NoiseSpec& spec);

struct SliceTriplet {
    std::array<Image, 3> y; ///< previous, center, next
    std::optional<std::array<Image, 3>> x;
    std::optional<std::array<Image, 3>> n;
    std::size_t s = 0; ///< center slice index
    std::size_t k = 0; ///< volume index

    [[nodiscard]] const Image& y_prev() const { return y[0]; }
    [[nodiscard]] const Image& y_center() const { return y[1]; }
    [[nodiscard]] const Image& y_next() const { return y[2]; }
};

/// One triplet per interior slice s = 1 .. S-2.
std::vector<SliceTriplet> extract_triplets(const Volume& noisy, const Volume* clean = nullptr,
                                           const Volume* noise = nullptr, std::size_t volume_index = 0);

/// d_s = |2x_s - x_{s-1} - x_{s+1}| / |x_s| for every interior slice.
std::vector<double> slice_similarity(const Volume& clean);

/// Writes `<base>.vol` (little-endian float32, [S][M][N]) and `<base>.json`.
/// `extra` is merged into the sidecar (for provenance stanzas); it must be a JSON object text or empty.
void save_volume(const Volume& v, const std::filesystem::path& base, const std::string& extra_json = {});
Volume load_volume(const std::filesystem::path& base);

/// `<base>.vol` / `<base>.json` for a base path given with or without an extension.
std::filesystem::path volume_payload_path(const std::filesystem::path& base);
std::filesystem::path volume_sidecar_path(const std::filesystem::path& base);

} // namespace n2c
