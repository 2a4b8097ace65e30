// turbid: command-line driver for the forecasting pipeline.
//
//   turbid <stage> --config run.cfg [--set key=value ...]
//
// Stages: ingest, cv, features, meta, report, run (all five), synth.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "turbid/harness.hpp"
#include "turbid/synthetic.hpp"

namespace {

turbid::Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
    try {
        auto cfg = turbid::Config::load(path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw turbid::DataError("--set expects key=value, got '" + kv + "'");
            cfg.set(turbid::Config::trim(kv.substr(0, eq)), turbid::Config::trim(kv.substr(eq + 1)));
        }
        return cfg;
    } catch (const std::exception& e) {
        throw turbid::harness::StageError("config", e.what());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Daily turbidity forecasting: rolling CV of ARIMA/GAM/LSTM and a feature-based model selector"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    const std::vector<std::pair<std::string, std::string>> stages{
        {"ingest", "read raw sources, aggregate to daily, align -> aligned.csv"},
        {"cv", "rolling-origin CV of the three models -> folds.csv, timings.csv, selection.json"},
        {"features", "window features for every fold -> features.csv"},
        {"meta", "label, split, train the forest selector -> meta_report.json"},
        {"report", "metric tables and plots -> metrics.json, *.svg"},
        {"run", "all stages in order"}};
    for (const auto& [name, help] : stages) {
        auto* sc = app.add_subcommand(name, help);
        sc->add_option("-c,--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
        sc->add_option("-s,--set", overrides, "override a config key (key=value), repeatable");
    }

    std::string synth_dir;
    turbid::synthetic::HydroOptions hydro;
    auto* synth = app.add_subcommand("synth", "write the synthetic dataset (raw sources, source cfgs, run.cfg)");
    synth->add_option("dir", synth_dir, "output directory")->required();
    synth->add_option("--days", hydro.days, "number of days")->check(CLI::Range(60, 100000));
    synth->add_option("--seed", hydro.seed, "simulation seed");
    bool meta_bench = false;
    synth->add_flag("--meta-benchmark", meta_bench,
                    "instead write aligned.csv + folds.csv of a series whose best model is a function of its window features");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "[config] ";
        app.exit(e);
        return turbid::harness::exit_code_for("config");
    }

    using namespace turbid::harness;
    try {
        if (synth->parsed() && meta_bench) {
            const std::filesystem::path dir(synth_dir);
            std::filesystem::create_directories(dir);
            const auto mb = turbid::synthetic::make_meta_benchmark();
            std::ofstream fa(dir / "aligned.csv", std::ios::binary);
            turbid::write_frame_csv(fa, mb.frame);
            std::ofstream ff(dir / "folds.csv", std::ios::binary);
            turbid::write_folds_csv(ff, mb.records);
            std::ofstream os(dir / "run.cfg");
            os << "# precomputed folds; run the features, meta and report stages only\n"
                  "target = turbidity\n"
                  "target_unit = NTU\n"
                  "covariates = turbidity\n"
                  "train_len = 200\n"
                  "window_len = 30\n"
                  "seed = 42\n"
                  "output_dir = out\n";
            std::cout << "wrote " << synth_dir << '\n';
            return 0;
        }
        if (synth->parsed()) {
            turbid::synthetic::write_hydrology(synth_dir, hydro);
            std::ofstream os(std::filesystem::path(synth_dir) / "run.cfg");
            os << "# synthetic daily dataset; paths are relative to this file\n"
                  "sources = turbidity.cfg, level.cfg, rain.cfg, temperature.cfg, solar.cfg\n"
                  "target = turbidity\n"
                  "target_unit = NTU\n"
                  "covariates = rain, level, temperature, solar\n"
                  "train_len = 200\n"
                  "window_len = 30\n"
                  "seed = 42\n"
                  "output_dir = out\n";
            std::cout << "wrote " << synth_dir << '\n';
            return 0;
        }
        const auto cfg = load_config(config_path, overrides);
        const std::string stage = app.get_subcommands().front()->get_name();
        if (stage == "ingest") {
            const auto f = stage_ingest(cfg);
            std::cout << "ingest: " << f.size() << " days, " << f.names().size() << " columns\n";
        } else if (stage == "cv") {
            const auto recs = stage_cv(cfg);
            std::cout << "cv: " << recs.size() << " folds\n";
        } else if (stage == "features") {
            const auto fv = stage_features(cfg);
            std::cout << "features: " << fv.size() << " windows\n";
        } else if (stage == "meta") {
            const auto mo = stage_meta(cfg);
            std::cout << "meta: " << mo.dataset.train().size() << " train / " << mo.dataset.test().size()
                      << " test rows, test accuracy " << mo.model.test_accuracy << '\n';
        } else if (stage == "report") {
            stage_report(cfg);
            std::cout << "report: " << paths_for(cfg).metrics().string() << '\n';
        } else {
            run_pipeline(cfg, &std::cout);
        }
        return 0;
    } catch (const StageError& e) {
        std::cerr << e.what() << '\n';
        return exit_code_for(e.stage());
    } catch (const std::exception& e) {
        std::cerr << "[error] " << e.what() << '\n';
        return 1;
    }
}
