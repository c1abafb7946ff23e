// curvinit: Hessian-calibrated initialization experiments for dense networks.
//
//   curvinit <experiment> --config <path> [--out <csv-path>]
//   curvinit calibrate --layers 784,128,64,10 --act tanh --scheme glorot --target 1.0

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "curvinit/curvinit.hpp"

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kDivergence = 4 };

int report(const char* kind, const std::exception& e, int code) {
    std::cerr << "curvinit: " << kind << ": " << e.what() << '\n';
    return code;
}

void emit(const curvinit::CsvTable& table, const std::string& out_path) {
    if (out_path.empty()) {
        table.write(std::cout);
        return;
    }
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw curvinit::ConfigError("cannot write " + out_path);
    table.write(os);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hessian-based weight initialization for dense networks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;

    for (const auto& name : curvinit::experiment_names()) {
        if (name == "calibrate") continue;
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_path, "CSV output path (default: stdout)");
    }

    auto* cal = app.add_subcommand("calibrate", "scale an init scheme so the top Hessian eigenvalue hits a target");
    std::string layers, act = "tanh", output_act = "linear", scheme = "glorot", loss = "ce", save_net;
    double target = 1.0, tol = 0.1, input_scale = 0.1;
    std::size_t layer = 1, samples = 64, max_bisect = 60;
    std::uint64_t seed = 0;
    bool relu_correct = false, dropout_correct = false;
    cal->add_option("--config", config_path, "key=value config file (command-line flags override it)")
        ->check(CLI::ExistingFile);
    cal->add_option("--out", out_path, "CSV output path (default: stdout)");
    cal->add_option("--layers", layers, "comma-separated widths d_0,...,d_n");
    cal->add_option("--act", act, "hidden activation");
    cal->add_option("--output-act", output_act, "output-layer activation");
    cal->add_option("--scheme", scheme, "glorot | forward | backward | fixed:<std>");
    cal->add_option("--loss", loss, "ce | mse");
    cal->add_option("--target", target, "target top eigenvalue");
    cal->add_option("--tol", tol, "relative tolerance band");
    cal->add_option("--layer", layer, "layer whose Hessian is calibrated");
    cal->add_option("--samples", samples, "synthetic blob samples");
    cal->add_option("--input-scale", input_scale, "max input norm of the synthetic data");
    cal->add_option("--max-bisect", max_bisect, "bisection steps");
    cal->add_option("--seed", seed, "seed");
    cal->add_flag("--relu-correct", relu_correct, "divide the std of ReLU layers by sqrt(2)");
    cal->add_flag("--dropout-correct", dropout_correct, "divide the std before dropout by sqrt(keep rate)");
    cal->add_option("--save-net", save_net, "write the calibrated network in text format");

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name != "calibrate") {
            const auto cfg = curvinit::Config::load(config_path);
            emit(curvinit::run_experiment(name, cfg), out_path);
            return kOk;
        }

        curvinit::Config cfg = config_path.empty() ? curvinit::Config{} : curvinit::Config::load(config_path);
        auto override_with = [&](const char* flag, const char* key, const std::string& value) {
            if (sub->count(flag) > 0) cfg.set(key, value);
        };
        override_with("--layers", "layers", layers);
        override_with("--act", "act", act);
        override_with("--output-act", "output_act", output_act);
        override_with("--scheme", "scheme", scheme);
        override_with("--loss", "loss", loss);
        override_with("--target", "target", curvinit::format_shortest(target));
        override_with("--tol", "tol", curvinit::format_shortest(tol));
        override_with("--layer", "layer", std::to_string(layer));
        override_with("--samples", "samples", std::to_string(samples));
        override_with("--input-scale", "input_scale", curvinit::format_shortest(input_scale));
        override_with("--max-bisect", "max_bisect", std::to_string(max_bisect));
        override_with("--seed", "seed", std::to_string(seed));
        if (relu_correct) cfg.set("relu_correct", "true");
        if (dropout_correct) cfg.set("dropout_correct", "true");

        const auto outcome = curvinit::run_calibrate_outcome(cfg);
        for (const auto& w : curvinit::curvature_warnings(outcome.net)) std::cerr << "curvinit: warning: " << w << '\n';
        emit(curvinit::calibration_table(outcome), out_path);
        if (!save_net.empty()) {
            std::ofstream os(save_net);
            if (!os) throw curvinit::ConfigError("cannot write " + save_net);
            curvinit::write_network(os, outcome.net);
        }
        return kOk;
    } catch (const curvinit::ConfigError& e) {
        return report("config error", e, kConfigError);
    } catch (const curvinit::DataError& e) {
        return report("data error", e, kDataError);
    } catch (const curvinit::NonFinite& e) {
        return report("numeric divergence", e, kDivergence);
    } catch (const curvinit::BracketNotFound& e) {
        return report("calibration failed", e, kDivergence);
    } catch (const curvinit::InvalidInput& e) {
        return report("invalid input", e, kConfigError);
    } catch (const std::exception& e) {
        return report("error", e, kFailure);
    }
}
