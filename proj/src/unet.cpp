#include "n2c/unet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "n2c/error.hpp"

namespace n2c {

namespace {

constexpr char kMagic[8] = {'N', '2', 'C', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename U>
void write_le(std::ostream& os, U v)
{
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    }
    os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U read_le(std::istream& is)
{
    unsigned char bytes[sizeof(U)] = {};
    is.read(reinterpret_cast<char*>(bytes), sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(bytes[i]) << (8 * i);
    }
    return v;
}

int features_at(const UNetConfig& c, int level) { return c.base_features << level; }

} // namespace

void validate(const UNetConfig& c)
{
    if (c.levels < 1) throw ValidationError("UNetConfig.levels must be >= 1");
    if (c.levels > 8) throw ValidationError("UNetConfig.levels must be <= 8");
    if (c.base_features < 1) throw ValidationError("UNetConfig.base_features must be >= 1");
    if (c.convs_per_level < 1) throw ValidationError("UNetConfig.convs_per_level must be >= 1");
    if (c.in_channels != 1 || c.out_channels != 1) {
        throw ValidationError("UNetConfig: only single-channel input and output are supported");
    }
    if (!(c.window_max > c.window_min)) throw ValidationError("UNetConfig: window_max must exceed window_min");
    if (!(c.output_init_gain >= 0.0) || !std::isfinite(c.output_init_gain)) {
        throw ValidationError("UNetConfig.output_init_gain must be finite and >= 0");
    }
}

nlohmann::ordered_json to_json(const UNetConfig& c)
{
    return {{"levels", c.levels},
            {"base_features", c.base_features},
            {"convs_per_level", c.convs_per_level},
            {"in_channels", c.in_channels},
            {"out_channels", c.out_channels},
            {"residual", c.residual},
            {"window_min", c.window_min},
            {"window_max", c.window_max},
            {"output_init_gain", c.output_init_gain}};
}

UNetConfig unet_config_from_json(const nlohmann::json& j)
{
    UNetConfig c;
    c.levels = j.value("levels", c.levels);
    c.base_features = j.value("base_features", c.base_features);
    c.convs_per_level = j.value("convs_per_level", c.convs_per_level);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.out_channels = j.value("out_channels", c.out_channels);
    c.residual = j.value("residual", c.residual);
    c.window_min = j.value("window_min", c.window_min);
    c.window_max = j.value("window_max", c.window_max);
    c.output_init_gain = j.value("output_init_gain", c.output_init_gain);
    validate(c);
    return c;
}

std::vector<ParamSpec> parameter_layout(const UNetConfig& c)
{
    validate(c);
    std::vector<ParamSpec> out;
    auto conv = [&](const std::string& prefix, std::size_t cin, std::size_t cout) {
        out.push_back({prefix + ".weight", {cout, cin, 3, 3}, cin * 9});
        out.push_back({prefix + ".bias", {cout}, 0});
    };
    std::size_t channels = static_cast<std::size_t>(c.in_channels);
    for (int l = 0; l < c.levels; ++l) {
        const auto f = static_cast<std::size_t>(features_at(c, l));
        for (int k = 0; k < c.convs_per_level; ++k) {
            conv("enc" + std::to_string(l) + ".conv" + std::to_string(k), k == 0 ? channels : f, f);
        }
        channels = f;
    }
    for (int l = c.levels - 2; l >= 0; --l) {
        const auto f = static_cast<std::size_t>(features_at(c, l));
        const std::size_t cin = channels + f;
        for (int k = 0; k < c.convs_per_level; ++k) {
            conv("dec" + std::to_string(l) + ".conv" + std::to_string(k), k == 0 ? cin : f, f);
        }
        channels = f;
    }
    conv("out", channels, static_cast<std::size_t>(c.out_channels));
    return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
}

template <typename T>
void Network<T>::zero_grad()
{
    for (auto& p : params) p.zero_grad();
}

ModelState build(const UNetConfig& config, std::uint64_t seed)
{
    const auto layout = parameter_layout(config);
    ModelState m;
    m.config = config;
    m.init_seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& spec : layout) {
        std::vector<float> v(ad::numel(spec.shape), 0.0f);
        if (spec.fan_in > 0) {
            const double gain = spec.name == "out.weight" ? config.output_init_gain : 1.0;
            const double std_dev = gain * std::sqrt(2.0 / static_cast<double>(spec.fan_in));
            for (auto& w : v) w = static_cast<float>(std_dev * normal(rng));
        }
        m.names.push_back(spec.name);
        m.params.push_back(ad::Tensor<float>::parameter(spec.shape, std::move(v)));
    }
    return m;
}

template <typename T>
void fill_parameters(Network<T>& model, T value)
{
    for (auto& p : model.params) {
        auto v = p.mutable_values();
        std::fill(v.begin(), v.end(), value);
    }
}

template <typename T>
ad::Tensor<T> forward(const Network<T>& model, const ad::Tensor<T>& batch)
{
    const auto& c = model.config;
    if (batch.shape().size() != 4 || batch.shape()[1] != 1) {
        throw ValidationError("forward: expected a [B,1,H,W] batch, got " + ad::shape_str(batch.shape()));
    }
    const std::size_t div = std::size_t{1} << (c.levels - 1);
    const std::size_t H = batch.shape()[2];
    const std::size_t W = batch.shape()[3];
    if (H % div != 0 || W % div != 0) {
        throw ValidationError("forward: spatial size " + std::to_string(H) + "x" + std::to_string(W)
                              + " is not divisible by " + std::to_string(div) + " (levels="
                              + std::to_string(c.levels) + ")");
    }
    if (model.params.size() != parameter_layout(c).size()) {
        throw ValidationError("forward: parameter table does not match the config");
    }

    const T width = static_cast<T>(c.window_max - c.window_min);
    const auto offset = ad::Tensor<T>::constant(batch.shape(), std::vector<T>(batch.numel(), static_cast<T>(-c.window_min)));
    ad::Tensor<T> h = ad::scale(ad::add(batch, offset), T(1) / width);

    std::size_t p = 0;
    auto conv = [&](const ad::Tensor<T>& x) {
        const auto& w = model.params[p];
        const auto& b = model.params[p + 1];
        p += 2;
        return ad::conv2d(x, w, b, 1, 1);
    };

    std::vector<ad::Tensor<T>> skips;
    for (int l = 0; l < c.levels; ++l) {
        for (int k = 0; k < c.convs_per_level; ++k) h = ad::relu(conv(h));
        if (l + 1 < c.levels) {
            skips.push_back(h);
            h = ad::downsample2x(h);
        }
    }
    for (int l = c.levels - 2; l >= 0; --l) {
        h = ad::concat_channels(ad::upsample2x(h), skips[static_cast<std::size_t>(l)]);
        for (int k = 0; k < c.convs_per_level; ++k) h = ad::relu(conv(h));
    }
    const ad::Tensor<T> r = ad::scale(conv(h), width);
    if (c.residual) {
        return ad::add(batch, r);
    }
    const auto base = ad::Tensor<T>::constant(batch.shape(), std::vector<T>(batch.numel(), static_cast<T>(c.window_min)));
    return ad::add(r, base);
}

Image denoise_slice(const ModelState& model, const Image& slice)
{
    std::vector<float> v(slice.pixels.begin(), slice.pixels.end());
    const auto in = ad::Tensor<float>::constant({1, 1, slice.rows, slice.cols}, std::move(v));
    const auto out = forward(model, in);
    Image img(slice.rows, slice.cols);
    std::copy(out.values().begin(), out.values().end(), img.pixels.begin());
    return img;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const ModelState& model, const std::filesystem::path& path, const CheckpointInfo& info)
{
    nlohmann::ordered_json header;
    header["config"] = to_json(model.config);
    header["init_seed"] = model.init_seed;
    auto& table = header["tensors"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        table.push_back({{"name", model.names[i]}, {"shape", model.params[i].shape()}});
    }
    header["training"] = {{"mode", info.mode}, {"epochs", info.epochs}, {"steps", info.steps},
                          {"final_loss", info.final_loss}};
    for (const auto& [key, value] : info.extra.items()) {
        header[key] = value;
    }
    const std::string text = header.dump();

    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("save_checkpoint: cannot open " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_le<std::uint32_t>(out, kCheckpointVersion);
    write_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : model.params) {
        for (float v : p.values()) write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    if (!out) throw FormatError("save_checkpoint: write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const UNetConfig* expected)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("load_checkpoint: cannot open " + path.string());
    char magic[8] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("load_checkpoint: " + path.string() + " is not a checkpoint (bad magic bytes)");
    }
    const auto version = read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw FormatError("load_checkpoint: unsupported checkpoint version " + std::to_string(version));
    }
    const auto len = read_le<std::uint64_t>(in);
    if (!in || len > (std::uint64_t{1} << 30)) throw FormatError("load_checkpoint: corrupt header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw FormatError("load_checkpoint: truncated header");

    nlohmann::json header;
    UNetConfig config;
    try {
        header = nlohmann::json::parse(text);
        config = unet_config_from_json(header.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_checkpoint: malformed header: ") + e.what());
    }
    if (expected != nullptr && !(*expected == config)) {
        throw ValidationError("load_checkpoint: checkpoint config " + to_json(config).dump()
                              + " does not match expected config " + to_json(*expected).dump());
    }

    const auto layout = parameter_layout(config);
    const auto& table = header.at("tensors");
    if (!table.is_array() || table.size() != layout.size()) {
        throw FormatError("load_checkpoint: tensor table has " + std::to_string(table.size())
                          + " entries, config requires " + std::to_string(layout.size()));
    }
    LoadedCheckpoint result;
    result.model.config = config;
    result.model.init_seed = header.value("init_seed", std::uint64_t{0});
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto name = table[i].at("name").get<std::string>();
        const auto shape = table[i].at("shape").get<ad::Shape>();
        if (name != layout[i].name || shape != layout[i].shape) {
            throw FormatError("load_checkpoint: tensor " + std::to_string(i) + " is " + name + ad::shape_str(shape)
                              + ", config requires " + layout[i].name + ad::shape_str(layout[i].shape));
        }
        std::vector<float> v(ad::numel(shape));
        for (auto& x : v) x = std::bit_cast<float>(read_le<std::uint32_t>(in));
        if (!in) throw FormatError("load_checkpoint: truncated payload in tensor " + name);
        for (float x : v) {
            if (!std::isfinite(x)) throw FormatError("load_checkpoint: non-finite value in tensor " + name);
        }
        result.model.names.push_back(name);
        result.model.params.push_back(ad::Tensor<float>::parameter(shape, std::move(v)));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError("load_checkpoint: trailing bytes after the last tensor");
    }
    if (header.contains("training")) {
        const auto& t = header["training"];
        result.info.mode = t.value("mode", std::string{});
        result.info.epochs = t.value("epochs", 0);
        result.info.steps = t.value("steps", std::uint64_t{0});
        result.info.final_loss = t.value("final_loss", 0.0);
    }
    for (const auto& [key, value] : header.items()) {
        if (key != "config" && key != "init_seed" && key != "tensors" && key != "training") {
            result.info.extra[key] = value;
        }
    }
    return result;
}

template struct Network<float>;
template struct Network<double>;
template void fill_parameters(Network<float>&, float);
template void fill_parameters(Network<double>&, double);
template ad::Tensor<float> forward(const Network<float>&, const ad::Tensor<float>&);
template ad::Tensor<double> forward(const Network<double>&, const ad::Tensor<double>&);

} // namespace n2c
