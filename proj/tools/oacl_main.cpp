#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oacl/experiment.hpp"
#include "oacl/text_io.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Continual learning with orthogonal adaptive-rank adapters"};
    app.require_subcommand(1);

    oacl::CommandOptions opts;
    std::string out;
    std::uint64_t seed = 0;
    bool deterministic = true;

    auto* run = app.add_subcommand("run", "Pretrain, train the task stream, write artifacts");
    run->add_option("--config", opts.config_path, "JSON config")->required();
    run->add_option("--out", out, "Output directory (overrides output_dir)");
    run->add_option("--seed", seed, "Seed (overrides the config)");
    run->add_flag("--deterministic,!--no-deterministic", deterministic, "Deterministic execution (always on)");

    std::string arms;
    std::string seeds;
    auto* compare = app.add_subcommand("compare", "Run several arms over several seeds, write compare.csv");
    compare->add_option("--config", opts.config_path, "JSON config")->required();
    compare->add_option("--out", out, "Output directory (overrides output_dir)");
    compare->add_option("--variants", arms, "Comma-separated arms, e.g. oa_adapter,inc_adapter,oa_adapter/fixed");
    compare->add_option("--seeds", seeds, "Comma-separated seeds (overrides the config)");
    compare->add_flag("--deterministic,!--no-deterministic", deterministic, "Deterministic execution (always on)");

    std::vector<std::string> dirs;
    auto* report = app.add_subcommand("report", "Summarize one run directory, or diff two");
    report->add_option("dirs", dirs, "Run directories")->required()->expected(1, 2);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : oacl::kExitConfig;
    }

    if (!deterministic) {
        std::cerr << "error: non-deterministic execution is not supported\n";
        return oacl::kExitConfig;
    }
    if (!out.empty()) opts.out = out;

    try {
        if (*run) {
            if (run->count("--seed")) opts.seed = seed;
            return oacl::cmd_run(opts, std::cerr);
        }
        if (*compare) {
            for (const std::string& a : oacl::text::split(arms, ','))
                if (!a.empty()) opts.arms.push_back(a);
            for (const std::string& s : oacl::text::split(seeds, ','))
                if (!s.empty()) opts.seeds.push_back(static_cast<std::uint64_t>(oacl::text::parse_int(s)));
            return oacl::cmd_compare(opts, std::cerr);
        }
        std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
        return oacl::cmd_report(paths, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return oacl::kExitConfig;
    }
}
