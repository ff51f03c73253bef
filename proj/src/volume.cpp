#include "n2c/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace n2c {

namespace {

double quantize_hu(double v) { return std::round(v / kHuQuantum) * kHuQuantum; }

std::uint32_t to_little_endian(std::uint32_t v)
{
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
}

} // namespace

std::string to_string(VolumeKind kind)
{
    switch (kind) {
    case VolumeKind::clean: return "clean";
    case VolumeKind::noisy: return "noisy";
    case VolumeKind::noise: return "noise";
    case VolumeKind::denoised: return "denoised";
    }
    return "unknown";
}

VolumeKind volume_kind_from_string(const std::string& name)
{
    if (name == "clean") return VolumeKind::clean;
    if (name == "noisy") return VolumeKind::noisy;
    if (name == "noise") return VolumeKind::noise;
    if (name == "denoised") return VolumeKind::denoised;
    throw ValidationError("unknown volume kind '" + name + "'");
}

Volume::Volume(VolumeDims dims, std::vector<float> data, VolumeKind kind, VolumeGeometry geometry,
               std::optional<std::uint64_t> seed)
    : dims_(dims), data_(std::move(data)), kind_(kind), geometry_(geometry), seed_(seed)
{
    if (dims_.slices == 0 || dims_.rows == 0 || dims_.cols == 0) {
        throw ValidationError("Volume: all dimensions must be positive");
    }
    if (data_.size() != dims_.voxels()) {
        throw ValidationError("Volume: data holds " + std::to_string(data_.size()) + " voxels, dims require "
                              + std::to_string(dims_.voxels()));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        const float v = data_[i];
        if (!std::isfinite(v)) {
            throw ValidationError("Volume: non-finite value at voxel " + std::to_string(i));
        }
        if (v < kHuMin || v > kHuMax) {
            throw ValidationError("Volume: value " + std::to_string(v) + " HU at voxel " + std::to_string(i)
                                  + " outside [-2000, 4000]");
        }
    }
}

std::span<const float> Volume::slice(std::size_t s) const
{
    if (s >= dims_.slices) {
        throw ValidationError("Volume::slice: index " + std::to_string(s) + " out of range");
    }
    return std::span<const float>(data_).subspan(s * dims_.slice_size(), dims_.slice_size());
}

Image Volume::slice_image(std::size_t s) const
{
    const auto src = slice(s);
    Image img(dims_.rows, dims_.cols);
    std::copy(src.begin(), src.end(), img.pixels.begin());
    return img;
}

Volume Volume::relabel(VolumeKind kind, std::optional<std::uint64_t> seed) const
{
    Volume copy = *this;
    copy.kind_ = kind;
    copy.seed_ = seed;
    return copy;
}

Volume volume_from_slices(std::span<const Image> slices, VolumeKind kind, VolumeGeometry geometry,
                          std::optional<std::uint64_t> seed)
{
    if (slices.empty()) {
        throw ValidationError("volume_from_slices: no slices");
    }
    const VolumeDims dims{slices.size(), slices[0].rows, slices[0].cols};
    std::vector<float> data;
    data.reserve(dims.voxels());
    for (const auto& img : slices) {
        require_same_shape(img, slices[0], "volume_from_slices");
        for (double v : img.pixels) {
            data.push_back(static_cast<float>(v));
        }
    }
    return Volume(dims, std::move(data), kind, geometry, seed);
}

// ---------------------------------------------------------------------------
// Phantom

void validate(const PhantomSpec& spec)
{
    if (spec.dims.slices < 3) {
        throw ValidationError("PhantomSpec.dims: S=" + std::to_string(spec.dims.slices)
                              + " but at least 3 slices are needed for slice context");
    }
    if (spec.dims.rows == 0 || spec.dims.cols == 0) {
        throw ValidationError("PhantomSpec.dims: M and N must be positive");
    }
    if (spec.n_ellipsoids < 1) {
        throw ValidationError("PhantomSpec.n_ellipsoids must be >= 1");
    }
    if (spec.hu_range[0] > spec.hu_range[1]) {
        throw ValidationError("PhantomSpec.hu_range is inverted");
    }
    if (!(spec.z_smoothness > 0.0)) {
        throw ValidationError("PhantomSpec.z_smoothness must be > 0");
    }
    if (!(spec.body_radius_fraction > 0.0 && spec.body_radius_fraction <= 1.0)) {
        throw ValidationError("PhantomSpec.body_radius_fraction must lie in (0, 1]");
    }
}

Volume generate_phantom(const PhantomSpec& spec)
{
    validate(spec);
    const auto [S, M, N] = spec.dims;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const double body_a = spec.body_radius_fraction * 0.5 * static_cast<double>(M) * 0.8; // rows
    const double body_b = spec.body_radius_fraction * 0.5 * static_cast<double>(N);       // cols
    const double cr = 0.5 * static_cast<double>(M);
    const double cc = 0.5 * static_cast<double>(N);
    const double min_dim = static_cast<double>(std::min(M, N));

    struct Ellipsoid {
        double r0, c0, z0, a, b, c, cos_phi, sin_phi, offset;
    };
    std::vector<Ellipsoid> shapes;
    for (int i = 0; i < spec.n_ellipsoids; ++i) {
        const double theta = 2.0 * std::numbers::pi * unit(rng);
        const double rad = 0.7 * std::sqrt(unit(rng));
        const double a = (0.06 + 0.12 * unit(rng)) * min_dim;
        const double b = (0.06 + 0.12 * unit(rng)) * min_dim;
        const double phi = std::numbers::pi * unit(rng);
        const double z0 = unit(rng) * static_cast<double>(S);
        // Semi-axis floor plus a slab-scaled extent: objects span most of the slab so that raising the
        // floor only ever flattens the per-slice cross-section change.
        const double zc = spec.z_smoothness + (0.5 + unit(rng)) * static_cast<double>(S);
        const double off = spec.hu_range[0] + (spec.hu_range[1] - spec.hu_range[0]) * unit(rng);
        shapes.push_back({cr + rad * body_a * std::cos(theta), cc + rad * body_b * std::sin(theta), z0, a, b, zc,
                          std::cos(phi), std::sin(phi), quantize_hu(off)});
    }

    const double body = quantize_hu(spec.body_hu);
    std::vector<float> data(spec.dims.voxels());
    for (std::size_t s = 0; s < S; ++s) {
        const double z = static_cast<double>(s) + 0.5;
        for (std::size_t r = 0; r < M; ++r) {
            const double pr = static_cast<double>(r) + 0.5;
            for (std::size_t c = 0; c < N; ++c) {
                const double pc = static_cast<double>(c) + 0.5;
                const double br = (pr - cr) / body_a;
                const double bc = (pc - cc) / body_b;
                double value = kAirHu;
                if (br * br + bc * bc <= 1.0) {
                    value = body;
                    for (const auto& e : shapes) {
                        const double dr = pr - e.r0;
                        const double dc = pc - e.c0;
                        const double u = (dr * e.cos_phi + dc * e.sin_phi) / e.a;
                        const double v = (-dr * e.sin_phi + dc * e.cos_phi) / e.b;
                        const double w = (z - e.z0) / e.c;
                        if (u * u + v * v + w * w <= 1.0) {
                            value += e.offset;
                        }
                    }
                }
                data[(s * M + r) * N + c] = static_cast<float>(value);
            }
        }
    }
    return Volume(spec.dims, std::move(data), VolumeKind::clean, spec.geometry, spec.seed);
}

// ---------------------------------------------------------------------------
// Noise

std::string to_string(NoiseModel model)
{
    switch (model) {
    case NoiseModel::gaussian: return "gaussian";
    case NoiseModel::signal_dependent: return "signal_dependent";
    case NoiseModel::correlated_control: return "correlated_control";
    }
    return "unknown";
}

NoiseModel noise_model_from_string(const std::string& name)
{
    if (name == "gaussian") return NoiseModel::gaussian;
    if (name == "signal_dependent") return NoiseModel::signal_dependent;
    if (name == "correlated_control") return NoiseModel::correlated_control;
    throw ValidationError("unknown noise model '" + name + "'");
}

void validate(const NoiseSpec& spec)
{
    if (!(spec.sigma > 0.0) || !std::isfinite(spec.sigma)) {
        throw ValidationError("NoiseSpec.sigma must be > 0");
    }
    if (!(spec.coupling >= 0.0 && spec.coupling <= 1.0)) {
        throw ValidationError("NoiseSpec.coupling must lie in [0, 1]");
    }
}

NoisyPair add_noise(const Volume& clean, const NoiseSpec& spec)
{
    validate(spec);
    if (clean.kind() != VolumeKind::clean) {
        throw ValidationError("add_noise: input volume is '" + to_string(clean.kind()) + "', expected 'clean'");
    }
    const auto& dims = clean.dims();
    const std::size_t plane = dims.slice_size();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> shared;
    if (spec.model == NoiseModel::correlated_control) {
        shared.resize(plane);
        for (auto& v : shared) {
            v = normal(rng);
        }
    }
    const double own_w = std::sqrt(1.0 - spec.coupling);
    const double shared_w = std::sqrt(spec.coupling);

    const auto src = clean.data();
    std::vector<float> noisy(src.size());
    std::vector<float> noise(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double x = src[i];
        double n = 0.0;
        switch (spec.model) {
        case NoiseModel::gaussian:
            n = spec.sigma * normal(rng);
            break;
        case NoiseModel::signal_dependent:
            n = spec.sigma * std::sqrt(1.0 + std::max(x - kAirHu, 0.0) / 1000.0) * normal(rng);
            break;
        case NoiseModel::correlated_control:
            n = spec.sigma * (own_w * normal(rng) + shared_w * shared[i % plane]);
            break;
        }
        // Keep every sum inside the representable HU range on the quantum grid.
        n = quantize_hu(std::clamp(n, kHuMin - x, kHuMax - x));
        noise[i] = static_cast<float>(n);
        noisy[i] = static_cast<float>(x + n);
    }
    return {Volume(dims, std::move(noisy), VolumeKind::noisy, clean.geometry(), spec.seed),
            Volume(dims, std::move(noise), VolumeKind::noise, clean.geometry(), spec.seed)};
}

// ---------------------------------------------------------------------------
// Triplets and similarity

std::vector<SliceTriplet> extract_triplets(const Volume& noisy, const Volume* clean, const Volume* noise,
                                           std::size_t volume_index)
{
    const std::size_t S = noisy.slices();
    if (S < 3) {
        throw ValidationError("extract_triplets: S=" + std::to_string(S)
                              + " leaves no interior slice; at least 3 slices of context are needed");
    }
    for (const Volume* other : {clean, noise}) {
        if (other != nullptr && other->dims() != noisy.dims()) {
            throw ValidationError("extract_triplets: companion volume dims do not match the noisy volume");
        }
    }
    std::vector<SliceTriplet> out;
    out.reserve(S - 2);
    for (std::size_t s = 1; s + 1 < S; ++s) {
        SliceTriplet t;
        t.s = s;
        t.k = volume_index;
        t.y = {noisy.slice_image(s - 1), noisy.slice_image(s), noisy.slice_image(s + 1)};
        if (clean != nullptr) {
            t.x = std::array<Image, 3>{clean->slice_image(s - 1), clean->slice_image(s), clean->slice_image(s + 1)};
        }
        if (noise != nullptr) {
            t.n = std::array<Image, 3>{noise->slice_image(s - 1), noise->slice_image(s), noise->slice_image(s + 1)};
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<double> slice_similarity(const Volume& clean)
{
    if (clean.kind() != VolumeKind::clean) {
        throw ValidationError("slice_similarity: expected a clean volume");
    }
    const std::size_t S = clean.slices();
    if (S < 3) {
        throw ValidationError("slice_similarity: at least 3 slices are required");
    }
    std::vector<double> d;
    d.reserve(S - 2);
    for (std::size_t s = 1; s + 1 < S; ++s) {
        const auto prev = clean.slice(s - 1);
        const auto cur = clean.slice(s);
        const auto next = clean.slice(s + 1);
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
            const double c = cur[i];
            const double diff = 2.0 * c - static_cast<double>(prev[i]) - static_cast<double>(next[i]);
            num += diff * diff;
            den += c * c;
        }
        if (den == 0.0) {
            throw ValidationError("slice_similarity: slice " + std::to_string(s) + " has zero norm");
        }
        d.push_back(std::sqrt(num) / std::sqrt(den));
    }
    return d;
}

// ---------------------------------------------------------------------------
// File I/O

std::filesystem::path volume_payload_path(const std::filesystem::path& base)
{
    auto p = base;
    if (p.extension() == ".vol" || p.extension() == ".json") {
        p.replace_extension();
    }
    p += ".vol";
    return p;
}

std::filesystem::path volume_sidecar_path(const std::filesystem::path& base)
{
    auto p = base;
    if (p.extension() == ".vol" || p.extension() == ".json") {
        p.replace_extension();
    }
    p += ".json";
    return p;
}

void save_volume(const Volume& v, const std::filesystem::path& base, const std::string& extra_json)
{
    nlohmann::ordered_json meta;
    meta["format_version"] = 1;
    meta["dims"] = {v.slices(), v.rows(), v.cols()};
    meta["z_spacing_mm"] = v.geometry().z_spacing_mm;
    meta["slice_thickness_mm"] = v.geometry().slice_thickness_mm;
    meta["pixel_spacing_mm"] = v.geometry().pixel_spacing_mm;
    meta["kind"] = to_string(v.kind());
    if (v.seed()) {
        meta["seed"] = *v.seed();
    } else {
        meta["seed"] = nullptr;
    }
    if (!extra_json.empty()) {
        const auto extra = nlohmann::ordered_json::parse(extra_json);
        if (!extra.is_object()) {
            throw ValidationError("save_volume: extra sidecar content must be a JSON object");
        }
        for (const auto& [key, value] : extra.items()) {
            meta[key] = value;
        }
    }

    const auto payload = volume_payload_path(base);
    if (payload.has_parent_path()) {
        std::filesystem::create_directories(payload.parent_path());
    }
    std::ofstream out(payload, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("save_volume: cannot open " + payload.string());
    }
    const auto data = v.data();
    std::vector<std::uint32_t> words(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        words[i] = to_little_endian(std::bit_cast<std::uint32_t>(data[i]));
    }
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (!out) {
        throw FormatError("save_volume: write failed for " + payload.string());
    }

    std::ofstream side(volume_sidecar_path(base), std::ios::trunc);
    side << meta.dump(2) << "\n";
    if (!side) {
        throw FormatError("save_volume: cannot write sidecar for " + payload.string());
    }
}

Volume load_volume(const std::filesystem::path& base)
{
    const auto sidecar = volume_sidecar_path(base);
    const auto payload = volume_payload_path(base);
    std::ifstream side(sidecar);
    if (!side) {
        throw FormatError("load_volume: missing sidecar " + sidecar.string());
    }
    nlohmann::json meta;
    try {
        side >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_volume: malformed sidecar " + sidecar.string() + ": " + e.what());
    }

    VolumeDims dims;
    VolumeGeometry geometry;
    VolumeKind kind{};
    std::optional<std::uint64_t> seed;
    try {
        const int version = meta.at("format_version").get<int>();
        if (version != 1) {
            throw FormatError("load_volume: unknown format_version " + std::to_string(version) + " in "
                              + sidecar.string());
        }
        const auto d = meta.at("dims").get<std::vector<std::size_t>>();
        if (d.size() != 3) {
            throw FormatError("load_volume: dims must have 3 entries");
        }
        dims = {d[0], d[1], d[2]};
        geometry.z_spacing_mm = meta.at("z_spacing_mm").get<double>();
        geometry.slice_thickness_mm = meta.at("slice_thickness_mm").get<double>();
        geometry.pixel_spacing_mm = meta.at("pixel_spacing_mm").get<double>();
        kind = volume_kind_from_string(meta.at("kind").get<std::string>());
        if (meta.contains("seed") && !meta["seed"].is_null()) {
            seed = meta["seed"].get<std::uint64_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_volume: bad sidecar field in " + sidecar.string() + ": " + e.what());
    }

    std::ifstream in(payload, std::ios::binary | std::ios::ate);
    if (!in) {
        throw FormatError("load_volume: missing payload " + payload.string());
    }
    const auto actual = static_cast<std::uintmax_t>(in.tellg());
    const std::uintmax_t expected = static_cast<std::uintmax_t>(dims.voxels()) * 4u;
    if (actual != expected) {
        throw FormatError("load_volume: payload " + payload.string() + " has " + std::to_string(actual)
                          + " bytes, header dims require " + std::to_string(expected) + " bytes");
    }
    in.seekg(0);
    std::vector<std::uint32_t> words(dims.voxels());
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(expected));
    std::vector<float> data(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        data[i] = std::bit_cast<float>(to_little_endian(words[i]));
    }
    try {
        return Volume(dims, std::move(data), kind, geometry, seed);
    } catch (const ValidationError& e) {
        throw FormatError("load_volume: " + payload.string() + ": " + e.what());
    }
}

} // namespace n2c
