#include "qdistill/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "qdistill/rng.hpp"

namespace qdistill::data {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in)
        throw FormatError("truncated header in " + path + " at byte " +
                          std::to_string(static_cast<long>(in.tellg())));
    return (static_cast<std::uint32_t>(buf[0]) << 24) |
           (static_cast<std::uint32_t>(buf[1]) << 16) |
           (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

void write_be_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
    int max_label = 0;
    for (int l : ds.labels) max_label = std::max(max_label, l);
    std::vector<std::vector<std::size_t>> byc(static_cast<std::size_t>(max_label) + 1);
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        byc[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    return byc;
}

Dataset gather(const Dataset& ds, const std::vector<std::size_t>& indices) {
    Dataset out;
    std::vector<int> shape = ds.images.shape;
    shape[0] = static_cast<int>(indices.size());
    out.images = Tensor(shape);
    out.labels.reserve(indices.size());
    out.source_indices.reserve(indices.size());
    out.split = ds.split;
    out.normalized_with = ds.normalized_with;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto src = ds.images.slice(indices[k]);
        std::copy(src.begin(), src.end(), out.images.slice(k).begin());
        out.labels.push_back(ds.labels[indices[k]]);
        out.source_indices.push_back(ds.source_indices[indices[k]]);
    }
    return out;
}

} // namespace

std::size_t Normalizer::num_zero_sigma() const {
    std::size_t n = 0;
    for (auto f : zero_sigma) n += f;
    return n;
}

int Dataset::num_classes() const {
    int max_label = -1;
    for (int l : labels) max_label = std::max(max_label, l);
    return max_label + 1;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open " + images_path);
    const std::uint32_t magic = read_be_u32(img, images_path);
    if (magic != kIdxImagesMagic) {
        std::ostringstream msg;
        msg << images_path << ": bad image magic 0x" << std::hex << magic
            << " at byte 0 (expected 0x803)";
        throw FormatError(msg.str());
    }
    const std::uint32_t count = read_be_u32(img, images_path);
    const std::uint32_t rows = read_be_u32(img, images_path);
    const std::uint32_t cols = read_be_u32(img, images_path);

    std::ifstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw IoError("cannot open " + labels_path);
    const std::uint32_t lmagic = read_be_u32(lbl, labels_path);
    if (lmagic != kIdxLabelsMagic) {
        std::ostringstream msg;
        msg << labels_path << ": bad label magic 0x" << std::hex << lmagic
            << " at byte 0 (expected 0x801)";
        throw FormatError(msg.str());
    }
    const std::uint32_t lcount = read_be_u32(lbl, labels_path);
    if (lcount != count)
        throw FormatError("image count " + std::to_string(count) +
                          " does not match label count " + std::to_string(lcount));

    Dataset ds;
    ds.images = Tensor({static_cast<int>(count), 1, static_cast<int>(rows),
                        static_cast<int>(cols)});
    ds.labels.resize(count);
    ds.source_indices.resize(count);

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(pixels));
        if (!img)
            throw FormatError(images_path + ": truncated at image " + std::to_string(i) +
                              " (byte offset " +
                              std::to_string(16 + static_cast<long>(i) * static_cast<long>(pixels)) +
                              ")");
        auto dst = ds.images.slice(i);
        for (std::size_t p = 0; p < pixels; ++p)
            dst[p] = static_cast<double>(buf[p]) / 255.0;
        unsigned char label = 0;
        lbl.read(reinterpret_cast<char*>(&label), 1);
        if (!lbl)
            throw FormatError(labels_path + ": truncated at label " + std::to_string(i));
        ds.labels[i] = static_cast<int>(label);
        ds.source_indices[i] = static_cast<int>(i);
    }
    return ds;
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
    constexpr std::size_t kRecord = 3073;
    constexpr std::size_t kPixels = 3072;
    std::vector<std::vector<unsigned char>> records;
    for (const auto& path : batch_paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path);
        in.seekg(0, std::ios::end);
        const auto bytes = static_cast<std::size_t>(in.tellg());
        in.seekg(0);
        if (bytes == 0 || bytes % kRecord != 0)
            throw FormatError(path + ": size " + std::to_string(bytes) +
                              " is not a multiple of the 3073-byte record");
        const std::size_t n = bytes / kRecord;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<unsigned char> rec(kRecord);
            in.read(reinterpret_cast<char*>(rec.data()),
                    static_cast<std::streamsize>(kRecord));
            if (!in)
                throw FormatError(path + ": truncated record " + std::to_string(i));
            records.push_back(std::move(rec));
        }
    }
    Dataset ds;
    ds.images = Tensor({static_cast<int>(records.size()), 3, 32, 32});
    ds.labels.resize(records.size());
    ds.source_indices.resize(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (rec[0] > 9)
            throw FormatError("label byte " + std::to_string(rec[0]) +
                              " out of range in record " + std::to_string(i));
        ds.labels[i] = rec[0];
        ds.source_indices[i] = static_cast<int>(i);
        auto dst = ds.images.slice(i);
        for (std::size_t p = 0; p < kPixels; ++p)
            dst[p] = static_cast<double>(rec[1 + p]) / 255.0;
    }
    return ds;
}

Normalizer fit_normalizer(const Dataset& train) {
    if (train.size() == 0) throw ConfigError("cannot fit normalizer on empty split");
    const std::size_t dim = train.feature_dim();
    const double n = static_cast<double>(train.size());
    Normalizer norm;
    norm.mean.assign(dim, 0.0);
    norm.std.assign(dim, 0.0);
    norm.zero_sigma.assign(dim, 0);
    norm.fitted_on = "train";
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto row = train.sample(i);
        for (std::size_t j = 0; j < dim; ++j) norm.mean[j] += row[j];
    }
    for (auto& m : norm.mean) m /= n;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto row = train.sample(i);
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = row[j] - norm.mean[j];
            norm.std[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < dim; ++j) {
        norm.std[j] = std::sqrt(norm.std[j] / n); // population sigma
        if (norm.std[j] == 0.0) norm.zero_sigma[j] = 1;
    }
    return norm;
}

Dataset apply_normalizer(const Dataset& ds, const Normalizer& norm) {
    const std::size_t dim = ds.feature_dim();
    if (norm.mean.size() != dim || norm.std.size() != dim)
        throw ShapeError("normalizer dimension does not match dataset");
    Dataset out = ds;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto row = out.images.slice(i);
        for (std::size_t j = 0; j < dim; ++j)
            row[j] = norm.zero_sigma[j] ? 0.0 : (row[j] - norm.mean[j]) / norm.std[j];
    }
    out.normalized_with = norm.fitted_on;
    return out;
}

Dataset subset(const Dataset& ds, int per_class, std::uint64_t seed) {
    if (per_class < 1) throw ConfigError("per_class must be >= 1");
    auto byc = indices_by_class(ds);
    for (std::size_t c = 0; c < byc.size(); ++c)
        if (byc[c].size() < static_cast<std::size_t>(per_class))
            throw ConfigError("class " + std::to_string(c) + " has only " +
                              std::to_string(byc[c].size()) + " samples, need " +
                              std::to_string(per_class));
    std::vector<std::size_t> chosen;
    Rng rng(derive_seed(seed, "subset"));
    for (auto& cls : byc) {
        rng.shuffle(cls);
        chosen.insert(chosen.end(), cls.begin(),
                      cls.begin() + static_cast<std::ptrdiff_t>(per_class));
    }
    std::sort(chosen.begin(), chosen.end());
    return gather(ds, chosen);
}

TrainValSplit stratified_split(const Dataset& ds, double val_fraction,
                               std::uint64_t seed) {
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw ConfigError("val fraction must be in (0, 1)");
    auto byc = indices_by_class(ds);
    std::vector<std::size_t> train_idx, val_idx;
    Rng rng(derive_seed(seed, "val-split"));
    for (auto& cls : byc) {
        if (cls.empty()) continue;
        rng.shuffle(cls);
        std::size_t n_val = static_cast<std::size_t>(
            std::llround(val_fraction * static_cast<double>(cls.size())));
        n_val = std::min(std::max<std::size_t>(n_val, 1), cls.size() - 1);
        val_idx.insert(val_idx.end(), cls.begin(),
                       cls.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_idx.insert(train_idx.end(), cls.begin() + static_cast<std::ptrdiff_t>(n_val),
                         cls.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    TrainValSplit out;
    out.train = gather(ds, train_idx);
    out.train.split = Split::Train;
    out.val = gather(ds, val_idx);
    out.val.split = Split::Val;
    return out;
}

std::span<const double> TeacherLogitsTable::lookup(int source_index) const {
    const auto it = rows.find(source_index);
    if (it == rows.end())
        throw CoverageError("no teacher logits for sample " +
                            std::to_string(source_index));
    return {it->second.data(), it->second.size()};
}

void save_teacher_logits(const std::string& path, const TeacherLogitsTable& table) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "qlogits v1 " << table.num_classes << " " << table.teacher_name << "\n";
    std::vector<int> keys;
    keys.reserve(table.rows.size());
    for (const auto& [k, _] : table.rows) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    char buf[64];
    for (int k : keys) {
        out << k;
        for (double v : table.rows.at(k)) {
            std::snprintf(buf, sizeof(buf), " %.17g", v);
            out << buf;
        }
        out << "\n";
    }
    if (!out) throw IoError("failed writing " + path);
}

TeacherLogitsTable load_teacher_logits_unchecked(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw FormatError(path + ": empty file");
    std::istringstream hs(header);
    std::string tag, version;
    TeacherLogitsTable table;
    if (!(hs >> tag >> version >> table.num_classes) || tag != "qlogits" ||
        version != "v1")
        throw FormatError(path + ": bad header '" + header + "'");
    hs >> table.teacher_name;
    if (table.num_classes < 1) throw FormatError(path + ": invalid class count");
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        int key;
        if (!(ls >> key))
            throw FormatError(path + ": bad index on line " + std::to_string(lineno));
        std::vector<double> logits(static_cast<std::size_t>(table.num_classes));
        for (int c = 0; c < table.num_classes; ++c)
            if (!(ls >> logits[static_cast<std::size_t>(c)]))
                throw FormatError(path + ": expected " +
                                  std::to_string(table.num_classes) +
                                  " logits on line " + std::to_string(lineno));
        double extra;
        if (ls >> extra)
            throw FormatError(path + ": too many logits on line " +
                              std::to_string(lineno));
        table.rows[key] = std::move(logits);
    }
    return table;
}

TeacherLogitsTable load_teacher_logits(const std::string& path, const Dataset& ds) {
    TeacherLogitsTable table = load_teacher_logits_unchecked(path);
    if (table.num_classes != ds.num_classes())
        throw FormatError(path + ": table has " + std::to_string(table.num_classes) +
                          " classes, dataset has " + std::to_string(ds.num_classes()));
    std::vector<int> missing;
    for (int src : ds.source_indices)
        if (table.rows.find(src) == table.rows.end()) missing.push_back(src);
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << path << ": missing logits for " << missing.size() << " samples:";
        for (std::size_t i = 0; i < missing.size() && i < 16; ++i)
            msg << ' ' << missing[i];
        if (missing.size() > 16) msg << " ...";
        throw CoverageError(msg.str());
    }
    return table;
}

void write_idx_pair(const std::string& images_path, const std::string& labels_path,
                    const std::vector<std::vector<std::uint8_t>>& images, int rows,
                    int cols, const std::vector<std::uint8_t>& labels) {
    if (images.size() != labels.size())
        throw ShapeError("image/label count mismatch");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot write " + images_path);
    write_be_u32(img, kIdxImagesMagic);
    write_be_u32(img, static_cast<std::uint32_t>(images.size()));
    write_be_u32(img, static_cast<std::uint32_t>(rows));
    write_be_u32(img, static_cast<std::uint32_t>(cols));
    for (const auto& image : images) {
        if (image.size() != static_cast<std::size_t>(rows) * cols)
            throw ShapeError("image pixel count mismatch");
        img.write(reinterpret_cast<const char*>(image.data()),
                  static_cast<std::streamsize>(image.size()));
    }
    std::ofstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw IoError("cannot write " + labels_path);
    write_be_u32(lbl, kIdxLabelsMagic);
    write_be_u32(lbl, static_cast<std::uint32_t>(labels.size()));
    lbl.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
}

} // namespace qdistill::data
