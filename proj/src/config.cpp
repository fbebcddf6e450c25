#include "qdistill/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>

#include "qdistill/rng.hpp"

namespace qdistill::config {

train::StudentSpec ExperimentConfig::student_spec() const {
    train::StudentSpec spec;
    spec.reducer = reducer_kind();
    spec.hidden_dim = hidden_dim;
    spec.encoding = encoding_kind();
    spec.num_qubits = qubits;
    spec.layers = layers;
    spec.readout = readout_mode();
    spec.num_classes = 10;
    spec.channels = channels();
    spec.height = height();
    spec.width = width();
    return spec;
}

std::map<std::string, std::string> parse_config_text(const std::string& raw) {
    std::map<std::string, std::string> entries;
    std::istringstream in(raw);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line without '=': " + line);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t");
            return s.substr(a, b - a + 1);
        };
        entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return entries;
}

namespace {

const std::set<std::string> kKnownKeys = {
    "dataset",     "data_root",   "per_class",  "test_per_class", "qubits",
    "layers",      "encoding",    "reducer",    "hidden_dim",     "readout",
    "teacher",     "tau",         "alpha",      "lr",             "max_epochs",
    "patience",    "batch_size",  "seeds",      "shots",          "eval_with_shots",
    "engine",      "data_seed",   "val_fraction", "out",          "with_baseline",
    "clip_norm",   "require_min_gain", "require_max_p",
};

bool parse_long(const std::string& s, long& out) {
    char* end = nullptr;
    out = std::strtol(s.c_str(), &end, 10);
    return end && *end == '\0' && !s.empty();
}

bool parse_double(const std::string& s, double& out) {
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end && *end == '\0' && !s.empty();
}

bool parse_bool(const std::string& s, bool& out) {
    if (s == "true" || s == "1") { out = true; return true; }
    if (s == "false" || s == "0") { out = false; return true; }
    return false;
}

} // namespace

ConfigValidation validate_config(const std::map<std::string, std::string>& entries) {
    ConfigValidation result;
    ExperimentConfig& cfg = result.config;
    auto& errors = result.errors;

    for (const auto& [key, value] : entries) {
        if (kKnownKeys.find(key) == kKnownKeys.end()) {
            errors.push_back("unknown config key '" + key + "'");
            continue;
        }
        long l = 0;
        double d = 0.0;
        bool b = false;
        if (key == "dataset") cfg.dataset = value;
        else if (key == "data_root") cfg.data_root = value;
        else if (key == "encoding") cfg.encoding = value;
        else if (key == "reducer") cfg.reducer = value;
        else if (key == "readout") cfg.readout = value;
        else if (key == "teacher") cfg.teacher = value;
        else if (key == "engine") cfg.engine = value;
        else if (key == "out") cfg.out_dir = value;
        else if (key == "seeds") {
            cfg.seeds.clear();
            std::istringstream ss(value);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                long seed = 0;
                if (!parse_long(tok, seed) || seed < 0) {
                    errors.push_back("seeds: bad entry '" + tok + "'");
                    break;
                }
                cfg.seeds.push_back(static_cast<std::uint64_t>(seed));
            }
        } else if (key == "per_class") {
            if (parse_long(value, l)) cfg.per_class = static_cast<int>(l);
            else errors.push_back("per_class: not an integer: " + value);
        } else if (key == "test_per_class") {
            if (parse_long(value, l)) cfg.test_per_class = static_cast<int>(l);
            else errors.push_back("test_per_class: not an integer: " + value);
        } else if (key == "qubits") {
            if (parse_long(value, l)) cfg.qubits = static_cast<int>(l);
            else errors.push_back("qubits: not an integer: " + value);
        } else if (key == "layers") {
            if (parse_long(value, l)) cfg.layers = static_cast<int>(l);
            else errors.push_back("layers: not an integer: " + value);
        } else if (key == "hidden_dim") {
            if (parse_long(value, l)) cfg.hidden_dim = static_cast<int>(l);
            else errors.push_back("hidden_dim: not an integer: " + value);
        } else if (key == "max_epochs") {
            if (parse_long(value, l)) cfg.max_epochs = static_cast<int>(l);
            else errors.push_back("max_epochs: not an integer: " + value);
        } else if (key == "patience") {
            if (parse_long(value, l)) cfg.patience = static_cast<int>(l);
            else errors.push_back("patience: not an integer: " + value);
        } else if (key == "batch_size") {
            if (parse_long(value, l)) cfg.batch_size = static_cast<int>(l);
            else errors.push_back("batch_size: not an integer: " + value);
        } else if (key == "shots") {
            if (parse_long(value, l)) cfg.shots = l;
            else errors.push_back("shots: not an integer: " + value);
        } else if (key == "data_seed") {
            if (parse_long(value, l) && l >= 0) cfg.data_seed = static_cast<std::uint64_t>(l);
            else errors.push_back("data_seed: not a non-negative integer: " + value);
        } else if (key == "tau") {
            if (parse_double(value, d)) cfg.tau = d;
            else errors.push_back("tau: not a number: " + value);
        } else if (key == "alpha") {
            if (parse_double(value, d)) cfg.alpha = d;
            else errors.push_back("alpha: not a number: " + value);
        } else if (key == "lr") {
            if (parse_double(value, d)) cfg.learning_rate = d;
            else errors.push_back("lr: not a number: " + value);
        } else if (key == "val_fraction") {
            if (parse_double(value, d)) cfg.val_fraction = d;
            else errors.push_back("val_fraction: not a number: " + value);
        } else if (key == "clip_norm") {
            if (parse_double(value, d)) cfg.clip_norm = d;
            else errors.push_back("clip_norm: not a number: " + value);
        } else if (key == "require_min_gain") {
            if (parse_double(value, d)) cfg.require_min_gain = d;
            else errors.push_back("require_min_gain: not a number: " + value);
        } else if (key == "require_max_p") {
            if (parse_double(value, d)) cfg.require_max_p = d;
            else errors.push_back("require_max_p: not a number: " + value);
        } else if (key == "eval_with_shots") {
            if (parse_bool(value, b)) cfg.eval_with_shots = b;
            else errors.push_back("eval_with_shots: not a boolean: " + value);
        } else if (key == "with_baseline") {
            if (parse_bool(value, b)) cfg.with_baseline = b;
            else errors.push_back("with_baseline: not a boolean: " + value);
        }
    }

    if (cfg.data_root.empty()) {
        if (const char* env = std::getenv("QDISTILL_DATA_ROOT")) cfg.data_root = env;
    }

    // cross-field checks; every violation is reported
    if (cfg.dataset != "mnist" && cfg.dataset != "fashionmnist" &&
        cfg.dataset != "cifar10" && cfg.dataset != "synth")
        errors.push_back("dataset must be mnist|fashionmnist|cifar10|synth, got '" +
                         cfg.dataset + "'");
    if (cfg.dataset != "synth" && cfg.data_root.empty())
        errors.push_back("data_root is required (flag --data-root, config key "
                         "data_root, or QDISTILL_DATA_ROOT)");
    if (cfg.qubits != 4 && cfg.qubits != 8)
        errors.push_back("qubits must be 4 or 8");
    if (cfg.layers < 1) errors.push_back("layers must be >= 1");
    if (cfg.per_class < 1) errors.push_back("per_class must be >= 1");
    if (cfg.test_per_class < 1) errors.push_back("test_per_class must be >= 1");
    if (!(cfg.tau > 0.0)) errors.push_back("tau must be > 0");
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0) errors.push_back("alpha must be in [0, 1]");
    if (!(cfg.learning_rate > 0.0)) errors.push_back("lr must be > 0");
    if (cfg.max_epochs < 1) errors.push_back("max_epochs must be >= 1");
    if (cfg.patience < 1) errors.push_back("patience must be >= 1");
    if (cfg.batch_size < 1) errors.push_back("batch_size must be >= 1");
    if (cfg.seeds.empty()) errors.push_back("seeds must contain at least one seed");
    if (cfg.shots < 0) errors.push_back("shots must be >= 0");
    if (cfg.eval_with_shots && cfg.shots < 1)
        errors.push_back("eval_with_shots requires shots >= 1");
    if (cfg.hidden_dim < 1) errors.push_back("hidden_dim must be >= 1");
    if (cfg.val_fraction <= 0.0 || cfg.val_fraction >= 1.0)
        errors.push_back("val_fraction must be in (0, 1)");

    bool teacher_ok = cfg.teacher == "lenet" || cfg.teacher == "alexnet" ||
                      cfg.teacher == "none" || cfg.teacher_is_logits();
    if (!teacher_ok)
        errors.push_back("teacher must be lenet|alexnet|logits:<path>|none");
    if (cfg.teacher == "none" && cfg.alpha > 0.0 && !cfg.with_baseline)
        errors.push_back("distillation weight without teacher (teacher=none, alpha>0)");
    if (cfg.teacher == "none" && cfg.alpha > 0.0 && cfg.with_baseline)
        errors.push_back("distillation weight without teacher (teacher=none, alpha>0); "
                         "set alpha=0 for a baseline-only run");

    try {
        const auto enc = cfg.encoding_kind();
        const auto red = cfg.reducer_kind();
        if (red != reduce::ReducerKind::FullyConnected &&
            enc != encode::EncodingKind::Amplitude)
            errors.push_back("reducer '" + cfg.reducer +
                             "' is only supported with amplitude encoding");
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    try {
        (void)cfg.readout_mode();
        if (cfg.readout == "basis-probs" && (1 << cfg.qubits) < 10)
            errors.push_back("basis-probs readout needs 2^qubits >= 10");
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    try {
        (void)cfg.gradient_engine();
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    if (errors.empty()) {
        try {
            cfg.student_spec().validate();
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
    }
    return result;
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::ostringstream out;
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "dataset=" << cfg.dataset << "\n";
    out << "data_root=" << cfg.data_root << "\n";
    out << "per_class=" << cfg.per_class << "\n";
    out << "test_per_class=" << cfg.test_per_class << "\n";
    out << "qubits=" << cfg.qubits << "\n";
    out << "layers=" << cfg.layers << "\n";
    out << "encoding=" << cfg.encoding << "\n";
    out << "reducer=" << cfg.reducer << "\n";
    out << "hidden_dim=" << cfg.hidden_dim << "\n";
    out << "readout=" << cfg.readout << "\n";
    out << "teacher=" << cfg.teacher << "\n";
    out << "tau=" << num(cfg.tau) << "\n";
    out << "alpha=" << num(cfg.alpha) << "\n";
    out << "lr=" << num(cfg.learning_rate) << "\n";
    out << "max_epochs=" << cfg.max_epochs << "\n";
    out << "patience=" << cfg.patience << "\n";
    out << "batch_size=" << cfg.batch_size << "\n";
    out << "seeds=";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
        out << (i ? "," : "") << cfg.seeds[i];
    out << "\n";
    out << "shots=" << cfg.shots << "\n";
    out << "eval_with_shots=" << (cfg.eval_with_shots ? "true" : "false") << "\n";
    out << "engine=" << cfg.engine << "\n";
    out << "data_seed=" << cfg.data_seed << "\n";
    out << "val_fraction=" << num(cfg.val_fraction) << "\n";
    out << "with_baseline=" << (cfg.with_baseline ? "true" : "false") << "\n";
    out << "clip_norm=" << num(cfg.clip_norm) << "\n";
    return out.str();
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
    const std::string text = config_to_text(cfg);
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace qdistill::config
