#include "n2c/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "n2c/error.hpp"

namespace n2c {

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

std::string hex64(std::uint64_t v)
{
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view role)
{
    // splitmix64 finalizer over the mixed inputs.
    std::uint64_t z = global_seed ^ fnv1a64(role);
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace {

/// Reads one JSON object, remembering its key path for error messages and rejecting unknown keys.
class Fields {
public:
    Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    [[noreturn]] static void fail(const std::string& where, const std::string& what)
    {
        throw ValidationError(where + ": " + what);
    }

    [[nodiscard]] std::string at(const std::string& key) const { return path_ + "." + key; }
    [[nodiscard]] bool has(const std::string& key)
    {
        seen_.insert(key);
        return j_.contains(key);
    }
    const nlohmann::json& raw(const std::string& key)
    {
        seen_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key, double fallback)
    {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number()) fail(at(key), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(at(key), "must be finite");
        return d;
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback, std::int64_t min = INT64_MIN)
    {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) fail(at(key), "expected an integer");
        const auto i = v.get<std::int64_t>();
        if (i < min) fail(at(key), "must be >= " + std::to_string(min));
        return i;
    }

    std::optional<std::uint64_t> seed(const std::string& key)
    {
        if (!has(key)) return std::nullopt;
        const auto& v = j_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            fail(at(key), "expected a nonnegative integer seed");
        }
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool fallback)
    {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) fail(at(key), "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback)
    {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_string()) fail(at(key), "expected a string");
        return v.get<std::string>();
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> fallback, std::size_t count = 0)
    {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_array()) fail(at(key), "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) fail(at(key) + "[" + std::to_string(i) + "]", "expected a number");
            out.push_back(v[i].get<double>());
        }
        if (count && out.size() != count) fail(at(key), "expected exactly " + std::to_string(count) + " values");
        if (out.empty()) fail(at(key), "must not be empty");
        return out;
    }

    void finish() const
    {
        for (const auto& [k, _] : j_.items()) {
            if (!seen_.contains(k)) fail(path_ + "." + k, "unknown field");
        }
    }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename Fn>
void rethrow_at(const std::string& where, Fn&& fn)
{
    try {
        fn();
    } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
    }
}

std::string default_label(const NoiseSpec& s)
{
    std::ostringstream os;
    os << "sigma" << s.sigma;
    std::string label = os.str();
    std::replace(label.begin(), label.end(), '.', 'p');
    return label;
}

} // namespace

bool ExperimentConfig::has_method(const std::string& m) const
{
    return std::find(methods.begin(), methods.end(), m) != methods.end();
}

std::uint64_t ExperimentConfig::model_init_seed() const
{
    return init_seed ? *init_seed : derive_seed(global_seed, "model/init");
}

void ExperimentConfig::apply_global_seed(std::uint64_t seed)
{
    global_seed = seed;
    if (!explicit_phantom_seed) phantom.seed = derive_seed(seed, "phantom");
    for (std::size_t i = 0; i < noise.size(); ++i) {
        if (!noise[i].explicit_seed) noise[i].spec.seed = derive_seed(seed, "noise/" + std::to_string(i));
    }
    if (!explicit_shuffle_seed) train.shuffle_seed = derive_seed(seed, "train/shuffle");
}

nlohmann::ordered_json ExperimentConfig::canonical_json() const
{
    nlohmann::ordered_json j;
    j["phantom"] = {{"dims", {phantom.dims.slices, phantom.dims.rows, phantom.dims.cols}},
                    {"n_ellipsoids", phantom.n_ellipsoids},
                    {"hu_range", {phantom.hu_range[0], phantom.hu_range[1]}},
                    {"z_smoothness", phantom.z_smoothness},
                    {"body_radius_fraction", phantom.body_radius_fraction},
                    {"body_hu", phantom.body_hu},
                    {"seed", phantom.seed}};
    auto& nl = j["noise"] = nlohmann::ordered_json::array();
    for (const auto& n : noise) {
        nl.push_back({{"label", n.label},
                      {"model", to_string(n.spec.model)},
                      {"sigma", n.spec.sigma},
                      {"coupling", n.spec.coupling},
                      {"seed", n.spec.seed}});
    }
    j["model"] = to_json(model);
    j["model"]["init_seed"] = model_init_seed();
    j["train"] = {{"lr", train.lr},
                  {"batch_size", train.batch_size},
                  {"epochs", train.epochs},
                  {"shuffle_seed", train.shuffle_seed},
                  {"log_every", train.log_every},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"eps", train.eps}};
    if (train.early_stop) {
        j["train"]["early_stop"] = {{"patience", train.early_stop->patience},
                                    {"min_delta", train.early_stop->min_delta}};
    }
    j["corpus"] = {{"size", corpus.size}, {"epochs", corpus.epochs}};
    j["baselines"] = {{"nlm_h", baselines.nlm_h},
                      {"tv_weight", baselines.tv_weight},
                      {"patch_size", baselines.patch_size},
                      {"search_window", baselines.search_window},
                      {"tv_max_iter", baselines.tv_max_iter},
                      {"tuning_slices", baselines.tuning_slices}};
    j["verify"] = {{"identity_triplets", verify.identity_triplets},
                   {"coupling_samples", verify.coupling_samples},
                   {"control_samples", verify.control_samples},
                   {"gradient_trials", verify.gradient_trials},
                   {"defect_realizations", verify.defect_realizations},
                   {"sigma", verify.sigma},
                   {"coupling_model", verify.coupling_model},
                   {"defect_model", verify.defect_model}};
    j["methods"] = methods;
    j["global_seed"] = global_seed;
    return j;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(canonical_json().dump())); }

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir)
{
    ExperimentConfig cfg;
    Fields root(j, "config");
    cfg.global_seed = root.seed("global_seed").value_or(0);

    if (!root.has("phantom")) Fields::fail("config.phantom", "missing");
    {
        Fields f(root.raw("phantom"), "config.phantom");
        auto& p = cfg.phantom;
        const auto dims = f.numbers("dims", {64, 64, 64}, 3);
        for (double d : dims) {
            if (d < 1 || d != std::floor(d)) Fields::fail(f.at("dims"), "expected positive integers");
        }
        p.dims = {static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
                  static_cast<std::size_t>(dims[2])};
        p.n_ellipsoids = static_cast<int>(f.integer("n_ellipsoids", p.n_ellipsoids, 1));
        const auto range = f.numbers("hu_range", {p.hu_range[0], p.hu_range[1]}, 2);
        p.hu_range = {range[0], range[1]};
        p.z_smoothness = f.number("z_smoothness", p.z_smoothness);
        p.body_radius_fraction = f.number("body_radius_fraction", p.body_radius_fraction);
        p.body_hu = f.number("body_hu", p.body_hu);
        if (auto s = f.seed("seed")) {
            p.seed = *s;
            cfg.explicit_phantom_seed = true;
        }
        f.finish();
        rethrow_at("config.phantom", [&] { validate(p); });
    }

    if (!root.has("noise")) Fields::fail("config.noise", "missing");
    {
        const auto& arr = root.raw("noise");
        if (!arr.is_array() || arr.empty()) Fields::fail("config.noise", "expected a non-empty array");
        std::set<std::string> labels;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "config.noise[" + std::to_string(i) + "]";
            Fields f(arr[i], where);
            NoiseLevel lvl;
            lvl.spec.model = NoiseModel::gaussian;
            if (f.has("model")) {
                const auto name = f.string("model", "gaussian");
                rethrow_at(f.at("model"), [&] { lvl.spec.model = noise_model_from_string(name); });
            }
            lvl.spec.sigma = f.number("sigma", lvl.spec.sigma);
            lvl.spec.coupling = f.number("coupling", lvl.spec.coupling);
            if (auto s = f.seed("seed")) {
                lvl.spec.seed = *s;
                lvl.explicit_seed = true;
            }
            lvl.label = f.string("label", default_label(lvl.spec));
            f.finish();
            rethrow_at(where, [&] { validate(lvl.spec); });
            if (lvl.label.empty() || lvl.label.find_first_of("/\\ ") != std::string::npos) {
                Fields::fail(where + ".label", "must be a non-empty file-name stem");
            }
            if (!labels.insert(lvl.label).second) Fields::fail(where + ".label", "duplicate label '" + lvl.label + "'");
            cfg.noise.push_back(lvl);
        }
    }

    if (root.has("model")) {
        const auto& m = root.raw("model");
        Fields f(m, "config.model");
        auto& c = cfg.model;
        c.levels = static_cast<int>(f.integer("levels", c.levels));
        c.base_features = static_cast<int>(f.integer("base_features", c.base_features));
        c.convs_per_level = static_cast<int>(f.integer("convs_per_level", c.convs_per_level));
        c.in_channels = static_cast<int>(f.integer("in_channels", c.in_channels));
        c.out_channels = static_cast<int>(f.integer("out_channels", c.out_channels));
        c.residual = f.boolean("residual", c.residual);
        c.window_min = f.number("window_min", c.window_min);
        c.window_max = f.number("window_max", c.window_max);
        c.output_init_gain = f.number("output_init_gain", c.output_init_gain);
        cfg.init_seed = f.seed("init_seed");
        f.finish();
        rethrow_at("config.model", [&] { validate(c); });
    }
    {
        const std::size_t div = std::size_t{1} << (cfg.model.levels - 1);
        if (cfg.phantom.dims.rows % div != 0 || cfg.phantom.dims.cols % div != 0) {
            Fields::fail("config.phantom.dims", "slice size must be divisible by 2^(model.levels-1) = "
                                                    + std::to_string(div));
        }
    }

    if (root.has("train")) {
        Fields f(root.raw("train"), "config.train");
        auto& t = cfg.train;
        t.lr = f.number("lr", t.lr);
        t.batch_size = static_cast<std::size_t>(f.integer("batch_size", static_cast<std::int64_t>(t.batch_size), 1));
        t.epochs = static_cast<int>(f.integer("epochs", t.epochs, 1));
        t.log_every = static_cast<std::size_t>(f.integer("log_every", static_cast<std::int64_t>(t.log_every), 1));
        t.beta1 = f.number("beta1", t.beta1);
        t.beta2 = f.number("beta2", t.beta2);
        t.eps = f.number("eps", t.eps);
        if (auto s = f.seed("shuffle_seed")) {
            t.shuffle_seed = *s;
            cfg.explicit_shuffle_seed = true;
        }
        if (f.has("early_stop")) {
            Fields e(f.raw("early_stop"), "config.train.early_stop");
            EarlyStop es;
            es.patience = static_cast<int>(e.integer("patience", es.patience, 1));
            es.min_delta = e.number("min_delta", es.min_delta);
            e.finish();
            t.early_stop = es;
        }
        f.finish();
        rethrow_at("config.train", [&] { validate(t); });
    }

    if (root.has("corpus")) {
        Fields f(root.raw("corpus"), "config.corpus");
        cfg.corpus.size = static_cast<int>(f.integer("size", cfg.corpus.size, 1));
        cfg.corpus.epochs = static_cast<int>(f.integer("epochs", cfg.corpus.epochs, 1));
        f.finish();
    }

    if (root.has("baselines")) {
        Fields f(root.raw("baselines"), "config.baselines");
        auto& b = cfg.baselines;
        b.nlm_h = f.numbers("nlm_h", b.nlm_h);
        b.tv_weight = f.numbers("tv_weight", b.tv_weight);
        b.patch_size = static_cast<int>(f.integer("patch_size", b.patch_size, 1));
        b.search_window = static_cast<int>(f.integer("search_window", b.search_window, 1));
        b.tv_max_iter = static_cast<int>(f.integer("tv_max_iter", b.tv_max_iter, 1));
        b.tuning_slices = static_cast<int>(f.integer("tuning_slices", b.tuning_slices, 1));
        f.finish();
        for (double h : b.nlm_h) {
            if (!(h > 0)) Fields::fail("config.baselines.nlm_h", "values must be > 0");
        }
        for (double w : b.tv_weight) {
            if (!(w > 0)) Fields::fail("config.baselines.tv_weight", "values must be > 0");
        }
        if (b.patch_size % 2 == 0 || b.search_window % 2 == 0 || b.patch_size > b.search_window) {
            Fields::fail("config.baselines", "patch_size and search_window must be odd with patch_size <= search_window");
        }
    }

    if (root.has("verify")) {
        Fields f(root.raw("verify"), "config.verify");
        auto& v = cfg.verify;
        v.identity_triplets = static_cast<std::size_t>(f.integer("identity_triplets", static_cast<std::int64_t>(v.identity_triplets), 1));
        v.coupling_samples = static_cast<std::size_t>(f.integer("coupling_samples", static_cast<std::int64_t>(v.coupling_samples), 30));
        v.control_samples = static_cast<std::size_t>(f.integer("control_samples", static_cast<std::int64_t>(v.control_samples), 30));
        v.gradient_trials = static_cast<int>(f.integer("gradient_trials", v.gradient_trials, 1));
        v.defect_realizations = static_cast<int>(f.integer("defect_realizations", v.defect_realizations, 1));
        v.sigma = f.number("sigma", v.sigma);
        if (!(v.sigma > 0)) Fields::fail(f.at("sigma"), "must be > 0");
        v.coupling_model = f.string("coupling_model", v.coupling_model);
        v.defect_model = f.string("defect_model", v.defect_model);
        f.finish();
        for (const auto& [key, value] : {std::pair{"coupling_model", v.coupling_model}, {"defect_model", v.defect_model}}) {
            if (value != "random" && value != "identity") {
                Fields::fail(std::string("config.verify.") + key, "expected 'random' or 'identity', got '" + value + "'");
            }
        }
    }

    if (!root.has("methods")) Fields::fail("config.methods", "missing");
    {
        const auto& arr = root.raw("methods");
        if (!arr.is_array() || arr.empty()) Fields::fail("config.methods", "expected a non-empty array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "config.methods[" + std::to_string(i) + "]";
            if (!arr[i].is_string()) Fields::fail(where, "expected a string");
            const auto m = arr[i].get<std::string>();
            if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) == kKnownMethods.end()) {
                Fields::fail(where, "unknown method '" + m + "' (expected noisy, nlm, tv, n2c_s, n2c_m or supervised)");
            }
            if (cfg.has_method(m)) Fields::fail(where, "duplicate method '" + m + "'");
            cfg.methods.push_back(m);
        }
    }

    cfg.output_dir = root.string("output_dir", cfg.output_dir.string());
    if (cfg.output_dir.is_relative()) cfg.output_dir = base_dir / cfg.output_dir;
    cfg.threads = static_cast<unsigned>(root.integer("threads", 1, 1));
    if (root.has("thresholds")) {
        cfg.thresholds = root.string("thresholds", "");
        if (cfg.thresholds.is_relative()) cfg.thresholds = base_dir / cfg.thresholds;
    }
    root.finish();
    cfg.apply_global_seed(cfg.global_seed);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path().empty() ? "." : path.parent_path());
}

nlohmann::ordered_json Thresholds::to_json() const
{
    return {{"identity_rel_residual", identity_rel_residual},
            {"gradient_rel_error", gradient_rel_error},
            {"coupling_z", coupling_z},
            {"se_ratio_min", se_ratio_min},
            {"se_ratio_max", se_ratio_max},
            {"control_z", control_z},
            {"similarity_max", similarity_max},
            {"defect_max", defect_max},
            {"control_defect_factor", control_defect_factor}};
}

Thresholds load_thresholds(const std::filesystem::path& path)
{
    if (path.empty()) throw ValidationError("thresholds file missing: config.thresholds is not set");
    std::ifstream in(path);
    if (!in) throw ValidationError("thresholds file missing: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("thresholds " + path.string() + ": " + e.what());
    }
    Thresholds t;
    Fields f(j, "thresholds");
    t.identity_rel_residual = f.number("identity_rel_residual", t.identity_rel_residual);
    t.gradient_rel_error = f.number("gradient_rel_error", t.gradient_rel_error);
    t.coupling_z = f.number("coupling_z", t.coupling_z);
    t.se_ratio_min = f.number("se_ratio_min", t.se_ratio_min);
    t.se_ratio_max = f.number("se_ratio_max", t.se_ratio_max);
    t.control_z = f.number("control_z", t.control_z);
    t.similarity_max = f.number("similarity_max", t.similarity_max);
    t.defect_max = f.number("defect_max", t.defect_max);
    t.control_defect_factor = f.number("control_defect_factor", t.control_defect_factor);
    f.finish();
    return t;
}

} // namespace n2c
