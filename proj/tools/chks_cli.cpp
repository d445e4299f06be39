// chks - forward simulation, optimal control and verification driver for the
// phase-field tumor/nutrient system. See README.md for the config format.
#include <CLI11.hpp>

#include "chks/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"chks - viscous Cahn-Hilliard / Keller-Segel solver and control engine"};
    app.require_subcommand(1);

    chks::CliOptions opt;
    std::string check_which;
    std::string report_dir;
    std::string out_dir;
    int stride = 0;
    uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "path to a key = value config file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
        sub->add_option("--stride", stride, "snapshot save stride (overrides output.stride)");
        sub->add_option("--seed", seed, "RNG seed (overrides seed)");
        sub->add_flag("--strict-positivity", opt.strict_positivity,
                      "treat nutrient negativity beyond tolerance as fatal");
    };

    CLI::App* sim = app.add_subcommand("simulate", "run the forward solver and save the trajectory");
    add_common(sim);
    CLI::App* opti = app.add_subcommand("optimize", "run projected-gradient optimal control");
    add_common(opti);
    CLI::App* check = app.add_subcommand("check", "run a verification suite");
    check->add_option("which", check_which, "gradient | duality | transpose | mass | convergence")
        ->required();
    check->add_option("--config", opt.config_path, "optional config (small sizes only)");
    CLI::App* report = app.add_subcommand("report", "emit plot-ready CSV from a trajectory directory");
    report->add_option("traj_dir", report_dir, "trajectory directory with meta.txt")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (!out_dir.empty()) opt.out_dir = out_dir;
    if (stride > 0) opt.stride = stride;
    if (seed != 0) opt.seed = seed;

    if (sim->parsed()) return chks::cmd_simulate(opt);
    if (opti->parsed()) return chks::cmd_optimize(opt);
    if (check->parsed()) return chks::cmd_check(check_which, opt.config_path);
    if (report->parsed()) return chks::cmd_report(report_dir);
    return 2;
}
