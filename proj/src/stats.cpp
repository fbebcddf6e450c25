#include "qdistill/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace qdistill::stats {

namespace {

// Continued-fraction evaluation of the incomplete beta function (Lentz).
double beta_continued_fraction(double a, double b, double x) {
    constexpr double kTiny = 1e-30;
    constexpr double kEps = 1e-14;
    constexpr int kMaxIter = 500;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw StateError("incomplete beta continued fraction did not converge");
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw ShapeError("incomplete beta argument outside [0, 1]");
    if (x == 0.0 || x == 1.0) return x;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

// Standard-normal survival doubled: two-sided chi-square(1) tail of z^2.
double chi2_1_tail(double x) { return std::erfc(std::sqrt(x / 2.0)); }

} // namespace

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw ShapeError("prediction/label length mismatch");
    if (predictions.empty()) throw ConfigError("accuracy of an empty set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw ConfigError("mean of an empty set");
    MeanStd out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() < 2) return out;
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return out;
}

double student_t_two_tailed_p(double t, int df) {
    if (df < 1) throw ConfigError("t-test requires df >= 1");
    const double nu = static_cast<double>(df);
    // P(|T| > |t|) = I_{nu/(nu + t^2)}(nu/2, 1/2)
    return regularized_incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("paired samples must have equal length");
    if (a.size() < 2) throw ConfigError("paired t-test needs n >= 2");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const auto ms = mean_std(d);
    TTestResult r;
    r.df = static_cast<int>(a.size()) - 1;
    if (ms.std == 0.0) {
        r.degenerate = true;
        r.t = 0.0;
        r.p = (ms.mean == 0.0) ? 1.0 : 0.0;
        return r;
    }
    r.t = ms.mean / (ms.std / std::sqrt(static_cast<double>(a.size())));
    r.p = student_t_two_tailed_p(r.t, r.df);
    return r;
}

McNemarResult mcnemar_test(std::span<const std::uint8_t> a_correct,
                           std::span<const std::uint8_t> b_correct) {
    if (a_correct.size() != b_correct.size())
        throw ShapeError("correctness vectors must have equal length");
    McNemarResult r;
    for (std::size_t i = 0; i < a_correct.size(); ++i) {
        if (a_correct[i] && !b_correct[i]) ++r.only_a;
        if (!a_correct[i] && b_correct[i]) ++r.only_b;
    }
    const long n = r.only_a + r.only_b;
    if (n == 0) {
        r.p = 1.0;
        return r;
    }
    const double diff = static_cast<double>(r.only_a - r.only_b);
    r.p = chi2_1_tail(diff * diff / static_cast<double>(n));
    return r;
}

MeanStd arm_accuracy(const ExperimentReport& report, const std::string& arm) {
    const auto it = report.arms.find(arm);
    if (it == report.arms.end()) throw StateError("unknown arm '" + arm + "'");
    std::vector<double> accs;
    accs.reserve(it->second.size());
    for (const auto& run : it->second) accs.push_back(run.accuracy);
    return mean_std(accs);
}

ComparisonBlock compare_arms(const ExperimentReport& report, const std::string& arm_a,
                             const std::string& arm_b) {
    const auto ita = report.arms.find(arm_a);
    const auto itb = report.arms.find(arm_b);
    if (ita == report.arms.end() || itb == report.arms.end())
        throw StateError("comparison arms missing from report");
    if (ita->second.size() != itb->second.size())
        throw ShapeError("arms have different run counts; cannot pair by seed");
    std::vector<double> accs_a, accs_b;
    for (const auto& run : ita->second) accs_a.push_back(run.accuracy);
    for (const auto& run : itb->second) accs_b.push_back(run.accuracy);

    ComparisonBlock block;
    block.name_a = arm_a;
    block.name_b = arm_b;
    block.mean_a = mean_std(accs_a).mean;
    block.mean_b = mean_std(accs_b).mean;
    block.delta_mean = block.mean_a - block.mean_b;
    block.t_test = paired_t_test(accs_a, accs_b);

    // McNemar on the largest paired evaluation set
    std::size_t best = 0, best_size = 0;
    for (std::size_t i = 0; i < ita->second.size(); ++i) {
        const auto& ra = ita->second[i].test_correct;
        const auto& rb = itb->second[i].test_correct;
        if (!ra.empty() && ra.size() == rb.size() && ra.size() > best_size) {
            best = i;
            best_size = ra.size();
        }
    }
    if (best_size > 0)
        block.mcnemar = mcnemar_test(ita->second[best].test_correct,
                                     itb->second[best].test_correct);
    return block;
}

std::string format_mean_std_percent(const MeanStd& ms) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(2);
    out << ms.mean * 100.0 << " \xC2\xB1 " << ms.std * 100.0;
    return out.str();
}

void emit_report(const ExperimentReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);

    const fs::path csv_path = fs::path(dir) / "report.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    csv << "arm,seed,accuracy,best_val_accuracy,epochs,config\n";
    for (const auto& [arm, runs] : report.arms)
        for (const auto& run : runs)
            csv << arm << ',' << run.seed << ',' << num(run.accuracy) << ','
                << num(run.best_val_accuracy) << ',' << run.epochs_ran << ','
                << run.config_fingerprint << '\n';
    csv << "\nsection,arm,mean,std,n\n";
    for (const auto& [arm, runs] : report.arms) {
        const auto ms = arm_accuracy(report, arm);
        csv << "summary," << arm << ',' << num(ms.mean) << ',' << num(ms.std) << ','
            << runs.size() << '\n';
    }
    if (!report.comparisons.empty()) {
        csv << "\nsection,a,b,delta_mean,t,df,p,degenerate\n";
        for (const auto& c : report.comparisons)
            csv << "comparison," << c.name_a << ',' << c.name_b << ','
                << num(c.delta_mean) << ',' << num(c.t_test.t) << ',' << c.t_test.df
                << ',' << num(c.t_test.p) << ',' << (c.t_test.degenerate ? 1 : 0)
                << '\n';
    }
    if (!report.parameter_counts.empty()) {
        csv << "\nsection,component,parameters\n";
        for (const auto& [name, count] : report.parameter_counts)
            csv << "params," << name << ',' << count << '\n';
    }
    csv.close();

    const fs::path txt_path = fs::path(dir) / "report.txt";
    std::ofstream txt(txt_path);
    if (!txt) throw IoError("cannot write " + txt_path.string());
    txt << "Experiment: " << report.experiment_name << "\n";
    txt << "Config fingerprint: " << report.config_fingerprint << "\n\n";
    txt << "Accuracy (%) per arm, mean \xC2\xB1 std over seeds:\n";
    for (const auto& [arm, runs] : report.arms) {
        const auto ms = arm_accuracy(report, arm);
        txt << "  " << arm << ": " << format_mean_std_percent(ms) << "  (n="
            << runs.size() << ")\n";
    }
    for (const auto& c : report.comparisons) {
        txt << "\nComparison " << c.name_a << " vs " << c.name_b << ":\n";
        txt.setf(std::ios::fixed);
        txt.precision(4);
        txt << "  delta mean = " << c.delta_mean * 100.0 << " points\n";
        txt << "  paired t = " << c.t_test.t << ", df = " << c.t_test.df
            << ", p = " << std::scientific << c.t_test.p << std::fixed;
        if (c.t_test.degenerate) txt << "  [degenerate: zero variance]";
        txt << "\n";
        if (c.mcnemar) {
            txt << "  mcnemar (largest run): only_" << c.name_a << " = "
                << c.mcnemar->only_a << ", only_" << c.name_b << " = "
                << c.mcnemar->only_b << ", p = " << std::scientific << c.mcnemar->p
                << std::fixed << "\n";
        }
    }
    if (!report.parameter_counts.empty()) {
        txt << "\nParameter counts:\n";
        for (const auto& [name, count] : report.parameter_counts)
            txt << "  " << name << ": " << count << "\n";
    }
}

ExperimentReport parse_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    ExperimentReport report;
    std::string line;
    enum class Section { Runs, Other } section = Section::Other;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line == "arm,seed,accuracy,best_val_accuracy,epochs,config") {
            section = Section::Runs;
            header_seen = true;
            continue;
        }
        if (line.rfind("section,", 0) == 0) {
            section = Section::Other;
            continue;
        }
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string tok;
        while (std::getline(ls, tok, ',')) fields.push_back(tok);
        if (section == Section::Runs) {
            if (fields.size() != 6) throw FormatError(path + ": bad run row: " + line);
            RunResult run;
            run.arm = fields[0];
            run.seed = std::strtoull(fields[1].c_str(), nullptr, 10);
            run.accuracy = std::strtod(fields[2].c_str(), nullptr);
            run.best_val_accuracy = std::strtod(fields[3].c_str(), nullptr);
            run.epochs_ran = static_cast<int>(std::strtol(fields[4].c_str(), nullptr, 10));
            run.config_fingerprint = fields[5];
            report.arms[run.arm].push_back(std::move(run));
        } else if (fields.size() == 8 && fields[0] == "comparison") {
            ComparisonBlock block;
            block.name_a = fields[1];
            block.name_b = fields[2];
            block.delta_mean = std::strtod(fields[3].c_str(), nullptr);
            block.t_test.t = std::strtod(fields[4].c_str(), nullptr);
            block.t_test.df = static_cast<int>(std::strtol(fields[5].c_str(), nullptr, 10));
            block.t_test.p = std::strtod(fields[6].c_str(), nullptr);
            block.t_test.degenerate = fields[7] == "1";
            report.comparisons.push_back(std::move(block));
        } else if (fields.size() == 3 && fields[0] == "params") {
            report.parameter_counts[fields[1]] =
                std::strtol(fields[2].c_str(), nullptr, 10);
        }
    }
    if (!header_seen) throw FormatError(path + ": missing report header row");
    return report;
}

} // namespace qdistill::stats
