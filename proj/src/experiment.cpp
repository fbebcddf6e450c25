#include "qdistill/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "qdistill/rng.hpp"
#include "qdistill/synth.hpp"

namespace qdistill::experiment {

namespace fs = std::filesystem;

namespace {

std::string data_fingerprint(const config::ExperimentConfig& cfg) {
    const std::string key = cfg.dataset + "|" + std::to_string(cfg.per_class) + "|" +
                            std::to_string(cfg.test_per_class) + "|" +
                            std::to_string(cfg.data_seed);
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : key) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string find_existing(const std::vector<std::string>& candidates) {
    for (const auto& c : candidates)
        if (fs::exists(c)) return c;
    throw IoError("none of the candidate dataset files exist; tried: " +
                  [&candidates] {
                      std::string all;
                      for (const auto& c : candidates) all += "\n  " + c;
                      return all;
                  }());
}

data::Dataset load_named_train(const config::ExperimentConfig& cfg) {
    const std::string root = cfg.data_root;
    if (cfg.dataset == "cifar10") {
        std::vector<std::string> batches;
        for (int i = 1; i <= 5; ++i) {
            batches.push_back(find_existing(
                {root + "/cifar10/data_batch_" + std::to_string(i) + ".bin",
                 root + "/cifar-10-batches-bin/data_batch_" + std::to_string(i) + ".bin",
                 root + "/data_batch_" + std::to_string(i) + ".bin"}));
        }
        return data::load_cifar10(batches);
    }
    const std::string dir = root + "/" + cfg.dataset;
    const auto images = find_existing({dir + "/train-images-idx3-ubyte",
                                       dir + "/train-images.idx3-ubyte",
                                       root + "/train-images-idx3-ubyte"});
    const auto labels = find_existing({dir + "/train-labels-idx1-ubyte",
                                       dir + "/train-labels.idx1-ubyte",
                                       root + "/train-labels-idx1-ubyte"});
    return data::load_idx(images, labels);
}

data::Dataset load_named_test(const config::ExperimentConfig& cfg) {
    const std::string root = cfg.data_root;
    if (cfg.dataset == "cifar10") {
        const auto batch = find_existing({root + "/cifar10/test_batch.bin",
                                          root + "/cifar-10-batches-bin/test_batch.bin",
                                          root + "/test_batch.bin"});
        return data::load_cifar10({batch});
    }
    const std::string dir = root + "/" + cfg.dataset;
    const auto images = find_existing({dir + "/t10k-images-idx3-ubyte",
                                       dir + "/t10k-images.idx3-ubyte",
                                       root + "/t10k-images-idx3-ubyte"});
    const auto labels = find_existing({dir + "/t10k-labels-idx1-ubyte",
                                       dir + "/t10k-labels.idx1-ubyte",
                                       root + "/t10k-labels-idx1-ubyte"});
    return data::load_idx(images, labels);
}

} // namespace

LoadedData prepare_data(const config::ExperimentConfig& cfg) {
    data::Dataset train_full, test_full;
    if (cfg.dataset == "synth") {
        // pools are ~25% larger than the requested subsets so subsetting
        // actually samples
        const int train_pool = cfg.per_class + std::max(cfg.per_class / 4, 8);
        const int test_pool = cfg.test_per_class + std::max(cfg.test_per_class / 4, 8);
        const std::string dir = cfg.out_dir + "/synth-data";
        const auto train_paths = synth::write_digit_idx(
            dir, "train", train_pool, derive_seed(cfg.data_seed, "synth-train"));
        const auto test_paths = synth::write_digit_idx(
            dir, "test", test_pool, derive_seed(cfg.data_seed, "synth-test"));
        train_full = data::load_idx(train_paths.images, train_paths.labels);
        test_full = data::load_idx(test_paths.images, test_paths.labels);
    } else {
        train_full = load_named_train(cfg);
        test_full = load_named_test(cfg);
    }

    LoadedData out;
    out.train =
        data::subset(train_full, cfg.per_class, derive_seed(cfg.data_seed, "train-subset"));
    out.test = data::subset(test_full, cfg.test_per_class,
                            derive_seed(cfg.data_seed, "test-subset"));
    out.test.split = data::Split::Test;
    out.normalizer = data::fit_normalizer(out.train);
    out.train = data::apply_normalizer(out.train, out.normalizer);
    out.test = data::apply_normalizer(out.test, out.normalizer);
    return out;
}

TeacherArtifacts prepare_teacher(const config::ExperimentConfig& cfg,
                                 const LoadedData& data) {
    TeacherArtifacts out;
    if (!cfg.has_teacher()) return out;
    out.present = true;

    if (cfg.teacher_is_logits()) {
        out.name = "logits";
        out.logits = data::load_teacher_logits(cfg.teacher_logits_path(), data.train);
        return out;
    }

    out.name = cfg.teacher;
    out.natively_trained = true;
    const auto net = cfg.teacher == "lenet" ? nn::build_lenet_teacher(10)
                                            : nn::build_alexnet_teacher(10);
    const auto plan = nn::plan_network(net);
    out.parameter_count = nn::count_parameters(plan);

    const std::string tag = cfg.teacher + "_" + data_fingerprint(cfg);
    const std::string ckpt_path = cfg.out_dir + "/teacher_" + tag + ".ckpt";
    const std::string logits_path = cfg.out_dir + "/teacher_" + tag + "_logits.txt";

    std::vector<double> params;
    bool reused = false;
    if (fs::exists(ckpt_path) && fs::exists(logits_path)) {
        try {
            auto ckpt = nn::load_checkpoint(ckpt_path);
            if (ckpt.arch_name == cfg.teacher &&
                ckpt.params.size() == plan.total_params) {
                params = std::move(ckpt.params);
                out.logits = data::load_teacher_logits(logits_path, data.train);
                reused = true;
            }
        } catch (const std::exception&) {
            reused = false; // cache invalid; retrain below
        }
    }
    if (!reused) {
        train::TrainLoopConfig loop;
        loop.max_epochs = cfg.max_epochs;
        loop.patience = cfg.patience;
        loop.batch_size = cfg.batch_size;
        loop.learning_rate = cfg.learning_rate;
        loop.clip_norm = cfg.clip_norm;
        loop.seed = derive_seed(cfg.data_seed, "teacher-fit");
        const auto split = data::stratified_split(data.train, cfg.val_fraction,
                                                  derive_seed(cfg.data_seed, "teacher-val"));
        const auto fitres = train::fit_teacher(plan, split.train, split.val, loop);
        params = fitres.params;
        std::error_code ec;
        fs::create_directories(cfg.out_dir, ec);
        nn::save_checkpoint(ckpt_path, cfg.teacher, plan, params);
        out.logits = train::export_teacher_logits(plan, params, data.train, cfg.teacher);
        data::save_teacher_logits(logits_path, out.logits);
    }
    out.test_accuracy = train::evaluate_teacher(plan, params, data.test).accuracy;
    return out;
}

namespace {

reduce::PcaBasis prepare_pca(const config::ExperimentConfig& cfg,
                             const LoadedData& data) {
    const auto spec = cfg.student_spec();
    const std::string path = cfg.out_dir + "/pca_" + cfg.dataset + "_" +
                             std::to_string(spec.target_dim()) + "_" +
                             data_fingerprint(cfg) + ".bin";
    if (fs::exists(path)) {
        try {
            auto basis = reduce::load_pca_basis(path);
            if (basis.target_dim == static_cast<int>(spec.target_dim())) return basis;
        } catch (const std::exception&) {
            // cache invalid; refit below
        }
    }
    // plane images: channel-averaged when the dataset is color
    const int plane = spec.height * spec.width;
    Tensor rows({static_cast<int>(data.train.size()), plane});
    for (std::size_t i = 0; i < data.train.size(); ++i) {
        const auto sample = data.train.sample(i);
        std::vector<double> gray;
        std::span<const double> src = sample;
        if (spec.channels > 1) {
            gray = reduce::channel_average(sample, spec.channels, spec.height,
                                           spec.width);
            src = gray;
        }
        std::copy(src.begin(), src.end(), rows.slice(i).begin());
    }
    auto basis = reduce::pca_fit(rows, static_cast<int>(spec.target_dim()));
    if (basis.effective_rank < basis.target_dim)
        std::cerr << "warning: degenerate covariance, pca basis zero-padded beyond rank "
                  << basis.effective_rank << "\n";
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    reduce::save_pca_basis(path, basis);
    return basis;
}

stats::RunResult run_one(const config::ExperimentConfig& cfg, const LoadedData& data,
                         const train::StudentModel& init_model,
                         const data::TeacherLogitsTable* teacher, std::uint64_t seed,
                         const std::string& arm) {
    const auto split = data::stratified_split(data.train, cfg.val_fraction, seed);
    distill::DistillConfig dcfg;
    dcfg.temperature = cfg.tau;
    dcfg.alpha = cfg.alpha;
    train::TrainLoopConfig loop;
    loop.max_epochs = cfg.max_epochs;
    loop.patience = cfg.patience;
    loop.batch_size = cfg.batch_size;
    loop.learning_rate = cfg.learning_rate;
    loop.clip_norm = cfg.clip_norm;
    loop.seed = seed;
    loop.engine = cfg.gradient_engine();

    const auto fitres = train::fit(init_model, split.train, split.val, teacher, dcfg, loop);
    const long shots = cfg.eval_with_shots ? cfg.shots : 0;
    const auto eval = train::evaluate_student(fitres.model, data.test, shots,
                                              derive_seed(seed, arm));

    const std::string run_dir =
        cfg.out_dir + "/runs/seed" + std::to_string(seed) + "_" + arm;
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    train::save_student(run_dir, fitres.model);
    {
        std::ofstream hist(run_dir + "/history.txt");
        hist << train::history_to_text(fitres.history);
    }

    stats::RunResult run;
    run.seed = seed;
    run.accuracy = eval.accuracy;
    run.arm = arm;
    run.config_fingerprint = config::config_fingerprint(cfg);
    run.epochs_ran = fitres.epochs_ran;
    run.best_val_accuracy = fitres.best_val_accuracy;
    run.test_correct = eval.correct;
    return run;
}

} // namespace

stats::ExperimentReport run_experiment(const config::ExperimentConfig& cfg) {
    const auto spec = cfg.student_spec();
    spec.validate();
    const auto data = prepare_data(cfg);
    const auto teacher = prepare_teacher(cfg, data);

    reduce::PcaBasis pca;
    const reduce::PcaBasis* pca_ptr = nullptr;
    if (spec.reducer == reduce::ReducerKind::PCA) {
        pca = prepare_pca(cfg, data);
        pca_ptr = &pca;
    }

    stats::ExperimentReport report;
    report.experiment_name = cfg.dataset + "/" + cfg.encoding + "/" + cfg.reducer +
                             "/q" + std::to_string(cfg.qubits);
    report.config_fingerprint = config::config_fingerprint(cfg);

    for (const auto seed : cfg.seeds) {
        const auto init_model = train::student_init(spec, seed, pca_ptr);
        if (cfg.with_baseline)
            report.arms["baseline"].push_back(
                run_one(cfg, data, init_model, nullptr, seed, "baseline"));
        if (teacher.present)
            report.arms["distill"].push_back(
                run_one(cfg, data, init_model, &teacher.logits, seed, "distill"));
    }

    if (teacher.present && cfg.with_baseline && cfg.seeds.size() >= 2)
        report.comparisons.push_back(stats::compare_arms(report, "distill", "baseline"));

    {
        const auto init_model = train::student_init(spec, cfg.seeds.front(), pca_ptr);
        for (const auto& [name, count] : train::student_parameter_counts(init_model))
            report.parameter_counts["student_" + name] = count;
    }
    if (teacher.natively_trained) {
        report.parameter_counts["teacher_" + teacher.name] = teacher.parameter_count;
        stats::RunResult trun;
        trun.seed = 0;
        trun.accuracy = teacher.test_accuracy;
        trun.arm = "teacher";
        trun.config_fingerprint = report.config_fingerprint;
        report.arms["teacher"].push_back(trun);
    }

    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    {
        std::ofstream resolved(cfg.out_dir + "/config.resolved.txt");
        resolved << config::config_to_text(cfg);
    }
    stats::emit_report(report, cfg.out_dir);
    return report;
}

stats::ExperimentReport run_ablation(const config::ExperimentConfig& base,
                                     const std::string& axis,
                                     const std::vector<std::string>& values) {
    if (axis != "reducer" && axis != "encoding")
        throw ConfigError("ablation axis must be 'reducer' or 'encoding'");
    const auto data = prepare_data(base);

    stats::ExperimentReport report;
    report.experiment_name = base.dataset + "/ablate-" + axis;
    report.config_fingerprint = config::config_fingerprint(base);

    for (const auto& value : values) {
        config::ExperimentConfig cfg = base;
        cfg.teacher = "none";
        cfg.alpha = 0.0;
        cfg.with_baseline = true;
        if (axis == "reducer")
            cfg.reducer = value;
        else
            cfg.encoding = value;
        const auto spec = cfg.student_spec();
        spec.validate();

        reduce::PcaBasis pca;
        const reduce::PcaBasis* pca_ptr = nullptr;
        if (spec.reducer == reduce::ReducerKind::PCA) {
            pca = prepare_pca(cfg, data);
            pca_ptr = &pca;
        }
        for (const auto seed : cfg.seeds) {
            const auto init_model = train::student_init(spec, seed, pca_ptr);
            report.arms[value].push_back(
                run_one(cfg, data, init_model, nullptr, seed, value));
        }
        const auto init_model = train::student_init(spec, cfg.seeds.front(), pca_ptr);
        report.parameter_counts[value + "_total"] =
            train::student_parameter_counts(init_model)["total"];
    }

    std::error_code ec;
    fs::create_directories(base.out_dir, ec);
    stats::emit_report(report, base.out_dir);
    return report;
}

std::vector<SweepCell> run_sweep(const config::ExperimentConfig& base,
                                 const std::vector<double>& taus,
                                 const std::vector<double>& alphas) {
    if (!base.has_teacher())
        throw ConfigError("sweep requires a teacher");
    const auto data = prepare_data(base);
    const auto teacher = prepare_teacher(base, data);
    const auto spec = base.student_spec();
    spec.validate();

    std::vector<SweepCell> cells;
    const auto seed = base.seeds.front();
    const auto split = data::stratified_split(data.train, base.val_fraction, seed);
    const auto init_model = train::student_init(spec, seed, nullptr);
    for (const double tau : taus) {
        for (const double alpha : alphas) {
            distill::DistillConfig dcfg;
            dcfg.temperature = tau;
            dcfg.alpha = alpha;
            train::TrainLoopConfig loop;
            loop.max_epochs = base.max_epochs;
            loop.patience = base.patience;
            loop.batch_size = base.batch_size;
            loop.learning_rate = base.learning_rate;
            loop.clip_norm = base.clip_norm;
            loop.seed = seed;
            loop.engine = base.gradient_engine();
            const auto fitres =
                train::fit(init_model, split.train, split.val, &teacher.logits, dcfg, loop);
            cells.push_back({tau, alpha, fitres.best_val_accuracy});
            std::cerr << "sweep tau=" << tau << " alpha=" << alpha
                      << " val=" << fitres.best_val_accuracy << "\n";
        }
    }
    return cells;
}

void write_sweep_csv(const std::string& path, const std::vector<double>& taus,
                     const std::vector<double>& alphas,
                     const std::vector<SweepCell>& cells) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "alpha";
    for (const double tau : taus) out << ",tau=" << tau;
    out << "\n";
    out.setf(std::ios::fixed);
    out.precision(4);
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        out << alphas[ai];
        for (std::size_t ti = 0; ti < taus.size(); ++ti) {
            const auto& cell = cells[ti * alphas.size() + ai];
            out << ',' << cell.val_accuracy;
        }
        out << "\n";
    }
}

bool report_meets_gates(const config::ExperimentConfig& cfg,
                        const stats::ExperimentReport& report) {
    if (!cfg.require_min_gain && !cfg.require_max_p) return true;
    if (report.comparisons.empty()) return false;
    const auto& cmp = report.comparisons.front();
    if (cfg.require_min_gain && cmp.delta_mean * 100.0 < *cfg.require_min_gain)
        return false;
    if (cfg.require_max_p && !(cmp.t_test.p < *cfg.require_max_p)) return false;
    return true;
}

} // namespace qdistill::experiment
