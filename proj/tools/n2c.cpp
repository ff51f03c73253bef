#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "n2c/error.hpp"
#include "n2c/harness.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerifyFailed = 3;

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Neighbour-slice self-supervised CT denoising experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", n2c::kToolVersion);

    std::string config_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool quiet = false;

    const char* commands[][2] = {
        {"phantom", "Generate the clean phantom volumes"},
        {"corrupt", "Add noise at every configured level"},
        {"train", "Train the learned denoisers"},
        {"denoise", "Apply every configured method to the noisy volumes"},
        {"eval", "Compute RMSE and SSIM against the clean volume"},
        {"report", "Render report.md and report.json from metrics.json"},
        {"verify", "Check the loss identities, gradients and noise coupling"},
        {"pipeline", "phantom, corrupt, train, denoise, eval, report"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "Work directory (overrides output_dir)");
        sub->add_option("--seed", seed, "Global seed; re-derives every seed not pinned in the config");
        sub->add_option("--threads", threads, "Worker threads for inference")->check(CLI::PositiveNumber);
        sub->add_flag("--quiet,-q", quiet, "Suppress progress messages");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        std::optional<std::filesystem::path> work;
        if (out) work = *out;
        n2c::Context ctx = n2c::make_context(config_path, work, seed, threads);
        ctx.quiet = quiet;
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "phantom") n2c::cmd_phantom(ctx);
        else if (cmd == "corrupt") n2c::cmd_corrupt(ctx);
        else if (cmd == "train") n2c::cmd_train(ctx);
        else if (cmd == "denoise") n2c::cmd_denoise(ctx);
        else if (cmd == "eval") n2c::cmd_eval(ctx);
        else if (cmd == "report") n2c::cmd_report(ctx);
        else if (cmd == "pipeline") n2c::run_pipeline(ctx);
        else if (cmd == "verify") {
            const auto rep = n2c::cmd_verify(ctx);
            for (const auto& c : rep.checks) std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << '\n';
            return rep.passed() ? 0 : kExitVerifyFailed;
        }
    } catch (const n2c::ValidationError& e) {
        std::cerr << "n2c: invalid input: " << e.what() << '\n';
        return kExitUsage;
    } catch (const n2c::FormatError& e) {
        std::cerr << "n2c: bad file: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "n2c: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
