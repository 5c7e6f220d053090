#include <iostream>

#include <CLI11.hpp>

#include "farsign/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Asynchronous adversary-resilient signed-directional optimization simulator"};
    app.require_subcommand(1);

    farsign::CliOptions opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "run only this seed instead of the config's seed list");
        sub->add_option("--jobs", opt.jobs, "seeds run in parallel")->check(CLI::PositiveNumber);
        sub->add_flag("--strict", opt.strict, "treat stepsize and certification warnings as errors");
        sub->add_option("--out", opt.out, std::string("output directory (default: config, then $") + farsign::out_dir_env +
                                              ", then ./out)");
        sub->add_flag("--progress", opt.progress, "print a progress line to stderr");
    };

    auto* run = app.add_subcommand("run", "run FAR-SIGN for every configured seed");
    add_common(run);
    auto* compare = app.add_subcommand("compare", "run FAR-SIGN and the buffered baseline on the same budget");
    add_common(compare);
    auto* sweep = app.add_subcommand("sweep", "run the config once per value of its sweep key");
    add_common(sweep);

    farsign::RatesOptions rates_opt;
    auto* rates = app.add_subcommand("rates", "fit a log-log decay rate over exported traces");
    rates->add_option("traces", rates_opt.traces, "trace files or glob patterns (.csv or .jsonl)")->required();
    rates->add_option("--metric", rates_opt.metric, "f_val, grad_l1, track_err, track_err_sq, ergodic_avg, test_metric");
    rates->add_option("--from", rates_opt.n_lo, "first event of the fit window");
    rates->add_option("--to", rates_opt.n_hi, "last event of the fit window");
    rates->add_option("--target", rates_opt.target, "expected slope")->required();
    rates->add_option("--tol", rates_opt.tol, "accepted |slope - target|");

    farsign::RobustnessOptions rob;
    auto* check = app.add_subcommand("check-robustness", "certify a direction dictionary against f adversaries");
    check->add_option("--dict", rob.dictionary, "dictionary file, identity:<d>:<N>, or ganesh_example")->required();
    check->add_option("--f", rob.f, "adversary budget")->required();
    check->add_option("--method", rob.method, "auto, analytic_identity, exact_2d, monte_carlo");
    check->add_option("--samples", rob.samples, "Monte Carlo samples");
    check->add_option("--seed", rob.seed, "Monte Carlo seed");
    check->add_option("--subset-cap", rob.subset_cap, "maximum subsets enumerated");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : farsign::exit_code::config_error;
    }

    if (*run) return farsign::cmd_run(opt, std::cout, std::cerr);
    if (*compare) return farsign::cmd_compare(opt, std::cout, std::cerr);
    if (*sweep) return farsign::cmd_sweep(opt, std::cout, std::cerr);
    if (*rates) return farsign::cmd_rates(rates_opt, std::cout, std::cerr);
    return farsign::cmd_check_robustness(rob, std::cout, std::cerr);
}
