#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qdistill/experiment.hpp"
#include "qdistill/rng.hpp"
#include "qdistill/synth.hpp"

namespace {

using qdistill::config::ConfigValidation;
using qdistill::config::ExperimentConfig;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitGateFailed = 3;

// Flags land in this holder only when explicitly passed, so file values and
// built-in defaults survive.
struct FlagSet {
    std::map<std::string, std::string> values;
    std::string config_path;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "experiment config file (key=value)");
        auto opt = [this, app](const std::string& flag, const std::string& key,
                               const std::string& help) {
            app->add_option_function<std::string>(
                flag, [this, key](const std::string& v) { values[key] = v; }, help);
        };
        opt("--dataset", "dataset", "mnist|fashionmnist|cifar10|synth");
        opt("--data-root", "data_root", "directory holding the dataset files");
        opt("--per-class", "per_class", "train samples per class");
        opt("--test-per-class", "test_per_class", "test samples per class");
        opt("--qubits", "qubits", "student qubit count (4 or 8)");
        opt("--layers", "layers", "circuit layers");
        opt("--encoding", "encoding", "amplitude|angle|qubit");
        opt("--reducer", "reducer", "fc|crop|pca|maxpool|avgpool");
        opt("--hidden-dim", "hidden_dim", "fc reducer hidden width");
        opt("--readout", "readout", "linear|basis-probs");
        opt("--teacher", "teacher", "lenet|alexnet|logits:<path>|none");
        opt("--tau", "tau", "distillation temperature");
        opt("--alpha", "alpha", "distillation weight");
        opt("--lr", "lr", "learning rate");
        opt("--max-epochs", "max_epochs", "epoch cap");
        opt("--patience", "patience", "early stopping patience");
        opt("--batch-size", "batch_size", "mini-batch size");
        opt("--seeds", "seeds", "comma-separated seed list");
        app->add_option_function<std::string>(
            "--shots",
            [this](const std::string& v) {
                values["shots"] = v;
                // passing the flag opts into shot-based evaluation; 0 backs
                // out to analytic readout
                values["eval_with_shots"] = (v == "0") ? "false" : "true";
            },
            "evaluate with N measurement shots (0 = analytic)");
        opt("--eval-with-shots", "eval_with_shots", "true|false");
        opt("--engine", "engine", "adjoint|parameter-shift");
        opt("--data-seed", "data_seed", "subset/teacher seed");
        opt("--val-fraction", "val_fraction", "validation fraction of the train subset");
        opt("--out", "out", "output directory");
        opt("--with-baseline", "with_baseline", "true|false");
        opt("--clip-norm", "clip_norm", "gradient clip norm (0 disables)");
        opt("--require-min-gain", "require_min_gain",
            "fail (exit 3) unless distill-baseline gain >= this (accuracy points)");
        opt("--require-max-p", "require_max_p",
            "fail (exit 3) unless the paired t-test p < this");
    }

    ConfigValidation resolve() const {
        std::map<std::string, std::string> entries;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) {
                ConfigValidation bad;
                bad.errors.push_back("cannot open config file " + config_path);
                return bad;
            }
            std::stringstream buf;
            buf << in.rdbuf();
            entries = qdistill::config::parse_config_text(buf.str());
        }
        for (const auto& [k, v] : values) entries[k] = v; // flags win
        return qdistill::config::validate_config(entries);
    }
};

int report_errors(const ConfigValidation& v) {
    for (const auto& e : v.errors) std::cerr << "config error: " << e << "\n";
    return kExitValidation;
}

void print_report_summary(const qdistill::stats::ExperimentReport& report) {
    for (const auto& [arm, runs] : report.arms) {
        const auto ms = qdistill::stats::arm_accuracy(report, arm);
        std::cout << arm << ": " << qdistill::stats::format_mean_std_percent(ms)
                  << " (n=" << runs.size() << ")\n";
    }
    for (const auto& c : report.comparisons) {
        std::cout << c.name_a << " - " << c.name_b << " = "
                  << c.delta_mean * 100.0 << " points, t=" << c.t_test.t
                  << ", df=" << c.t_test.df << ", p=" << c.t_test.p;
        if (c.t_test.degenerate) std::cout << " [degenerate]";
        std::cout << "\n";
    }
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::istringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::strtod(tok.c_str(), nullptr));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid classical-to-quantum distillation experiments"};
    app.require_subcommand(1);

    FlagSet flags;

    auto* cmd_teacher = app.add_subcommand("train-teacher",
                                           "train a classical teacher and export logits");
    auto* cmd_logits = app.add_subcommand("export-logits",
                                          "export logits from a saved teacher checkpoint");
    std::string ckpt_path, logits_out;
    cmd_logits->add_option("--ckpt", ckpt_path, "teacher checkpoint")->required();
    cmd_logits->add_option("--logits-out", logits_out, "output logits file");
    auto* cmd_student = app.add_subcommand("train-student",
                                           "train the student without a teacher");
    auto* cmd_distill = app.add_subcommand("distill",
                                           "train baseline and distilled students");
    auto* cmd_ablate_r = app.add_subcommand("ablate-reducers",
                                            "compare dimensionality reducers");
    std::string reducers_csv = "fc,crop,pca,maxpool,avgpool";
    cmd_ablate_r->add_option("--reducers", reducers_csv, "comma-separated reducer list");
    auto* cmd_ablate_e = app.add_subcommand("ablate-encodings",
                                            "compare data encodings");
    std::string encodings_csv = "amplitude,angle,qubit";
    cmd_ablate_e->add_option("--encodings", encodings_csv, "comma-separated encoding list");
    auto* cmd_sweep = app.add_subcommand("sweep", "tau x alpha validation grid");
    std::string taus_csv = "1,2,5";
    std::string alphas_csv = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
    cmd_sweep->add_option("--taus", taus_csv, "temperature grid");
    cmd_sweep->add_option("--alphas", alphas_csv, "alpha grid");
    auto* cmd_report = app.add_subcommand("report", "print a saved report");
    std::string report_dir = "out";
    cmd_report->add_option("--out", report_dir, "directory holding report.csv");

    for (auto* cmd : {cmd_teacher, cmd_logits, cmd_student, cmd_distill, cmd_ablate_r,
                      cmd_ablate_e, cmd_sweep})
        flags.attach(cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_report->parsed()) {
            const auto report =
                qdistill::stats::parse_report_csv(report_dir + "/report.csv");
            print_report_summary(report);
            return kExitOk;
        }

        auto validation = flags.resolve();

        if (cmd_student->parsed()) {
            // baseline-only run
            validation.config.teacher = "none";
            validation.config.alpha = 0.0;
            validation.config.with_baseline = true;
        }
        if (cmd_distill->parsed() && !validation.config.has_teacher())
            validation.errors.push_back("distill requires a teacher");
        if (!validation.ok()) return report_errors(validation);
        const ExperimentConfig& cfg = validation.config;

        if (cmd_teacher->parsed()) {
            const auto data = qdistill::experiment::prepare_data(cfg);
            const auto teacher = qdistill::experiment::prepare_teacher(cfg, data);
            if (!teacher.present) {
                std::cerr << "config error: train-teacher needs teacher=lenet|alexnet\n";
                return kExitValidation;
            }
            std::cout << "teacher " << teacher.name << " test accuracy "
                      << teacher.test_accuracy * 100.0 << "%\n";
            std::cout << "parameters: " << teacher.parameter_count << "\n";
            return kExitOk;
        }

        if (cmd_logits->parsed()) {
            const auto data = qdistill::experiment::prepare_data(cfg);
            const auto ckpt = qdistill::nn::load_checkpoint(ckpt_path);
            const auto net = ckpt.arch_name == "lenet"
                                 ? qdistill::nn::build_lenet_teacher(ckpt.num_classes)
                                 : qdistill::nn::build_alexnet_teacher(ckpt.num_classes);
            const auto plan = qdistill::nn::plan_network(net);
            if (ckpt.params.size() != plan.total_params)
                throw qdistill::FormatError("checkpoint does not match architecture");
            const auto table = qdistill::train::export_teacher_logits(
                plan, ckpt.params, data.train, ckpt.arch_name);
            if (logits_out.empty()) logits_out = cfg.out_dir + "/teacher_logits.txt";
            std::filesystem::create_directories(cfg.out_dir);
            qdistill::data::save_teacher_logits(logits_out, table);
            std::cout << "wrote " << table.rows.size() << " rows to " << logits_out
                      << "\n";
            return kExitOk;
        }

        if (cmd_student->parsed() || cmd_distill->parsed()) {
            const auto report = qdistill::experiment::run_experiment(cfg);
            print_report_summary(report);
            if (!qdistill::experiment::report_meets_gates(cfg, report)) {
                std::cerr << "acceptance gate failed\n";
                return kExitGateFailed;
            }
            return kExitOk;
        }

        if (cmd_ablate_r->parsed() || cmd_ablate_e->parsed()) {
            std::vector<std::string> values;
            std::istringstream ss(cmd_ablate_r->parsed() ? reducers_csv : encodings_csv);
            std::string tok;
            while (std::getline(ss, tok, ',')) values.push_back(tok);
            ExperimentConfig base = cfg;
            if (cmd_ablate_e->parsed()) base.reducer = "fc";
            if (cmd_ablate_r->parsed()) base.encoding = "amplitude";
            const auto report = qdistill::experiment::run_ablation(
                base, cmd_ablate_r->parsed() ? "reducer" : "encoding", values);
            print_report_summary(report);
            return kExitOk;
        }

        if (cmd_sweep->parsed()) {
            const auto taus = parse_double_list(taus_csv);
            const auto alphas = parse_double_list(alphas_csv);
            const auto cells = qdistill::experiment::run_sweep(cfg, taus, alphas);
            std::filesystem::create_directories(cfg.out_dir);
            const std::string path = cfg.out_dir + "/sweep.csv";
            qdistill::experiment::write_sweep_csv(path, taus, alphas, cells);
            std::cout << "wrote " << cells.size() << " cells to " << path << "\n";
            return kExitOk;
        }
    } catch (const qdistill::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
