#include "crossmodal/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "crossmodal/errors.hpp"

namespace crossmodal {

namespace {

constexpr char kCorpusMagic[8] = {'A', 'V', 'C', 'O', 'R', 'P', 'U', 'S'};
constexpr std::uint32_t kCorpusVersion = 1;
constexpr char kCheckpointMagic[8] = {'A', 'V', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Sanity bounds on length fields so a corrupted file cannot request an
// absurd allocation before the truncation check fires.
constexpr std::uint64_t kMaxIdBytes = 1 << 20;
constexpr std::uint64_t kMaxLabelsPerRecord = 1 << 20;
constexpr std::uint64_t kMaxFeatureDim = 1 << 24;

bool little_endian_host() {
    const std::uint16_t probe = 0x1;
    return *reinterpret_cast<const unsigned char*>(&probe) == 1;
}

template <typename T>
void swap_bytes(T& value) {
    auto* bytes = reinterpret_cast<unsigned char*>(&value);
    std::reverse(bytes, bytes + sizeof(T));
}

class Writer {
  public:
    explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw FormatError(FormatError::Kind::Io, "cannot open " + path + " for writing");
    }

    template <typename T>
    void write(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        if (!little_endian_host()) swap_bytes(value);
        out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
        if (!out_) throw FormatError(FormatError::Kind::Io, "write failed on " + path_);
    }

    void write_bytes(const char* data, std::size_t n) {
        out_.write(data, static_cast<std::streamsize>(n));
        if (!out_) throw FormatError(FormatError::Kind::Io, "write failed on " + path_);
    }

    void close() {
        out_.close();
        if (!out_) throw FormatError(FormatError::Kind::Io, "close failed on " + path_);
    }

  private:
    std::string path_;
    std::ofstream out_;
};

class Reader {
  public:
    explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw FormatError(FormatError::Kind::Io, "cannot open " + path);
    }

    template <typename T>
    T read(const std::string& context) {
        static_assert(std::is_trivially_copyable_v<T>);
        T value;
        read_bytes(reinterpret_cast<char*>(&value), sizeof(T), context);
        if (!little_endian_host()) swap_bytes(value);
        return value;
    }

    void read_bytes(char* data, std::size_t n, const std::string& context) {
        in_.read(data, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError(FormatError::Kind::Truncated,
                              path_ + ": truncated while reading " + context + " at byte offset " +
                                  std::to_string(offset_));
        }
        offset_ += n;
    }

    std::uint64_t offset() const { return offset_; }

    bool at_eof() {
        return in_.peek() == std::char_traits<char>::eof();
    }

  private:
    std::string path_;
    std::ifstream in_;
    std::uint64_t offset_ = 0;
};

// Writes happen against a temp path swapped in atomically at the end.
class AtomicFile {
  public:
    explicit AtomicFile(const std::string& path)
        : final_path_(path), temp_path_(path + ".tmp"), writer_(temp_path_) {}

    Writer& writer() { return writer_; }

    void commit() {
        writer_.close();
        std::error_code ec;
        std::filesystem::rename(temp_path_, final_path_, ec);
        if (ec) {
            throw FormatError(FormatError::Kind::Io,
                              "cannot move " + temp_path_ + " to " + final_path_ + ": " +
                                  ec.message());
        }
    }

  private:
    std::string final_path_;
    std::string temp_path_;
    Writer writer_;
};

void write_string(Writer& w, const std::string& s) {
    w.write<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    w.write_bytes(s.data(), s.size());
}

std::string read_string(Reader& r, const std::string& context) {
    const auto n = r.read<std::uint32_t>(context + " length");
    if (n > kMaxIdBytes) {
        throw FormatError(FormatError::Kind::InvalidRecord,
                          context + ": implausible string length " + std::to_string(n));
    }
    std::string s(n, '\0');
    r.read_bytes(s.data(), n, context);
    return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_double(const std::string& token, std::size_t line_number) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(value)) {
        throw FormatError(FormatError::Kind::ParseError,
                          "line " + std::to_string(line_number) + ": bad float '" + token + "'");
    }
    return value;
}

std::int32_t parse_label(const std::string& token, std::size_t line_number) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const long value = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0' || value < 0 ||
        value > std::numeric_limits<std::int32_t>::max()) {
        throw FormatError(FormatError::Kind::ParseError,
                          "line " + std::to_string(line_number) + ": bad label '" + token + "'");
    }
    return static_cast<std::int32_t>(value);
}

void normalize_labels(std::vector<std::int32_t>& labels) {
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
}

void write_model(Writer& w, const JointModel& model) {
    auto write_branch = [&w](const BranchNetwork& branch) {
        w.write<std::uint32_t>(static_cast<std::uint32_t>(branch.layers.size()));
        for (const DenseLayer& layer : branch.layers) {
            w.write<std::uint64_t>(layer.weights.rows);
            w.write<std::uint64_t>(layer.weights.cols);
            w.write<std::uint8_t>(layer.activation == Activation::Relu ? 0 : 1);
            for (const double v : layer.weights.data) w.write<double>(v);
            for (const double v : layer.bias) w.write<double>(v);
        }
    };
    write_branch(model.visual);
    write_branch(model.audio);
    w.write<std::uint64_t>(model.classifier.rows);
    w.write<std::uint64_t>(model.classifier.cols);
    for (const double v : model.classifier.data) w.write<double>(v);
}

JointModel read_model(Reader& r) {
    JointModel model;
    auto read_branch = [&r](const char* which) {
        BranchNetwork branch;
        const auto n_layers = r.read<std::uint32_t>(std::string(which) + " layer count");
        std::size_t expected_in = 0;
        for (std::uint32_t l = 0; l < n_layers; ++l) {
            DenseLayer layer;
            const auto rows = r.read<std::uint64_t>("layer rows");
            const auto cols = r.read<std::uint64_t>("layer cols");
            const auto act = r.read<std::uint8_t>("layer activation");
            if (rows > kMaxFeatureDim || cols > kMaxFeatureDim) {
                throw FormatError(FormatError::Kind::InvalidRecord,
                                  std::string(which) + " layer " + std::to_string(l) +
                                      " has implausible dimensions");
            }
            if (rows == 0 || cols == 0 || act > 1) {
                throw FormatError(FormatError::Kind::InvalidRecord,
                                  std::string(which) + " layer " + std::to_string(l) +
                                      " has an invalid shape or activation");
            }
            if (l > 0 && cols != expected_in) {
                throw FormatError(FormatError::Kind::DimMismatch,
                                  std::string(which) + " layer " + std::to_string(l) +
                                      " does not chain with the previous layer");
            }
            expected_in = rows;
            layer.weights = Matrix(rows, cols);
            layer.bias = Vec(rows);
            layer.activation = act == 0 ? Activation::Relu : Activation::Identity;
            for (double& v : layer.weights.data) v = r.read<double>("layer weights");
            for (double& v : layer.bias) v = r.read<double>("layer bias");
            branch.layers.push_back(std::move(layer));
        }
        if (branch.layers.empty()) {
            throw FormatError(FormatError::Kind::InvalidRecord,
                              std::string(which) + " branch has no layers");
        }
        return branch;
    };
    model.visual = read_branch("visual");
    model.audio = read_branch("audio");
    const auto rows = r.read<std::uint64_t>("classifier rows");
    const auto cols = r.read<std::uint64_t>("classifier cols");
    if (rows > kMaxFeatureDim || cols > kMaxFeatureDim) {
        throw FormatError(FormatError::Kind::InvalidRecord,
                          "classifier has implausible dimensions");
    }
    model.classifier = Matrix(rows, cols);
    for (double& v : model.classifier.data) v = r.read<double>("classifier weights");
    return model;
}

void write_config(Writer& w, const TrainingConfig& c) {
    w.write<double>(c.margin_alpha);
    w.write<double>(c.p_negative);
    w.write<std::uint64_t>(c.batch_size);
    w.write<double>(c.lambda_value);
    w.write<std::uint64_t>(c.lambda_activation_step);
    w.write<std::uint64_t>(c.epochs);
    w.write<double>(c.learning_rate);
    w.write<std::uint8_t>(static_cast<std::uint8_t>(c.optimizer));
    w.write<double>(c.adam_beta1);
    w.write<double>(c.adam_beta2);
    w.write<double>(c.adam_epsilon);
    w.write<double>(c.l2_coefficient);
    w.write<std::uint8_t>(c.l2_includes_classifier ? 1 : 0);
    w.write<std::uint8_t>(c.classify_negative_pairs ? 1 : 0);
    w.write<std::uint32_t>(static_cast<std::uint32_t>(c.visual_widths.size()));
    for (const std::size_t width : c.visual_widths) w.write<std::uint64_t>(width);
    w.write<std::uint32_t>(static_cast<std::uint32_t>(c.audio_widths.size()));
    for (const std::size_t width : c.audio_widths) w.write<std::uint64_t>(width);
    w.write<std::uint64_t>(c.embedding_dim);
    w.write<std::uint64_t>(c.visual_input_dim);
    w.write<std::uint64_t>(c.audio_input_dim);
    w.write<std::uint64_t>(c.num_classes);
    w.write<std::uint64_t>(c.seed);
}

TrainingConfig read_config(Reader& r) {
    TrainingConfig c;
    c.margin_alpha = r.read<double>("config");
    c.p_negative = r.read<double>("config");
    c.batch_size = r.read<std::uint64_t>("config");
    c.lambda_value = r.read<double>("config");
    c.lambda_activation_step = r.read<std::uint64_t>("config");
    c.epochs = r.read<std::uint64_t>("config");
    c.learning_rate = r.read<double>("config");
    const auto opt = r.read<std::uint8_t>("config");
    if (opt > 1) throw FormatError(FormatError::Kind::InvalidRecord, "unknown optimizer code");
    c.optimizer = static_cast<OptimizerKind>(opt);
    c.adam_beta1 = r.read<double>("config");
    c.adam_beta2 = r.read<double>("config");
    c.adam_epsilon = r.read<double>("config");
    c.l2_coefficient = r.read<double>("config");
    c.l2_includes_classifier = r.read<std::uint8_t>("config") != 0;
    c.classify_negative_pairs = r.read<std::uint8_t>("config") != 0;
    const auto nv = r.read<std::uint32_t>("config");
    if (nv > 1024) {
        throw FormatError(FormatError::Kind::InvalidRecord, "implausible layer count in config");
    }
    c.visual_widths.resize(nv);
    for (auto& width : c.visual_widths) width = r.read<std::uint64_t>("config");
    const auto na = r.read<std::uint32_t>("config");
    if (na > 1024) {
        throw FormatError(FormatError::Kind::InvalidRecord, "implausible layer count in config");
    }
    c.audio_widths.resize(na);
    for (auto& width : c.audio_widths) width = r.read<std::uint64_t>("config");
    c.embedding_dim = r.read<std::uint64_t>("config");
    c.visual_input_dim = r.read<std::uint64_t>("config");
    c.audio_input_dim = r.read<std::uint64_t>("config");
    c.num_classes = r.read<std::uint64_t>("config");
    c.seed = r.read<std::uint64_t>("config");
    return c;
}

void write_gradients(Writer& w, const GradientSet& grads) {
    for (const ConstParamView& view : parameter_views(grads)) {
        for (std::size_t i = 0; i < view.size; ++i) w.write<double>(view.data[i]);
    }
}

void read_gradients(Reader& r, GradientSet& grads) {
    for (const ParamView& view : parameter_views(grads)) {
        for (std::size_t i = 0; i < view.size; ++i) view.data[i] = r.read<double>("moments");
    }
}

void check_model_matches_config(const JointModel& model, const TrainingConfig& config) {
    const ModelConfig mc = config.model_config();
    auto check_branch = [](const BranchNetwork& branch, std::size_t input_dim,
                           const std::vector<std::size_t>& widths, std::size_t embedding_dim,
                           const char* which) {
        if (branch.layers.size() != widths.size() + 1 || branch.input_dim() != input_dim ||
            branch.embedding_dim() != embedding_dim) {
            throw FormatError(FormatError::Kind::DimMismatch,
                              std::string("checkpoint ") + which +
                                  " branch does not match the stored config");
        }
        for (std::size_t l = 0; l < widths.size(); ++l) {
            if (branch.layers[l].weights.rows != widths[l]) {
                throw FormatError(FormatError::Kind::DimMismatch,
                                  std::string("checkpoint ") + which + " layer " +
                                      std::to_string(l) + " width does not match the config");
            }
        }
    };
    check_branch(model.visual, mc.visual_input_dim, mc.visual_widths, mc.embedding_dim, "visual");
    check_branch(model.audio, mc.audio_input_dim, mc.audio_widths, mc.embedding_dim, "audio");
    if (model.classifier.rows != mc.num_classes || model.classifier.cols != mc.embedding_dim) {
        throw FormatError(FormatError::Kind::DimMismatch,
                          "checkpoint classifier does not match the stored config");
    }
}

}  // namespace

void validate_record(const FeatureRecord& record, std::size_t index) {
    const std::string where = "record " + std::to_string(index);
    if (record.id.empty()) {
        throw FormatError(FormatError::Kind::InvalidRecord, where + ": empty id");
    }
    if (record.labels.empty()) {
        throw FormatError(FormatError::Kind::InvalidRecord,
                          where + " ('" + record.id + "'): no labels");
    }
    for (const std::int32_t label : record.labels) {
        if (label < 0) {
            throw FormatError(FormatError::Kind::InvalidRecord,
                              where + " ('" + record.id + "'): negative label");
        }
    }
    if (!all_finite(record.visual) || !all_finite(record.audio)) {
        throw FormatError(FormatError::Kind::InvalidRecord,
                          where + " ('" + record.id + "'): non-finite feature");
    }
}

void write_corpus(const std::string& path, const Corpus& records) {
    const std::size_t visual_dim = records.empty() ? 0 : records.front().visual.size();
    const std::size_t audio_dim = records.empty() ? 0 : records.front().audio.size();
    std::int32_t max_label = -1;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        validate_record(records[i], i);
        if (records[i].visual.size() != visual_dim || records[i].audio.size() != audio_dim) {
            throw FormatError(FormatError::Kind::DimMismatch,
                              "record " + std::to_string(i) + " ('" + records[i].id +
                                  "') disagrees with the corpus feature dimensions");
        }
        if (!seen.insert(records[i].id).second) {
            throw FormatError(FormatError::Kind::DuplicateId,
                              "record " + std::to_string(i) + ": duplicate id '" +
                                  records[i].id + "'");
        }
        for (const std::int32_t label : records[i].labels) max_label = std::max(max_label, label);
    }

    AtomicFile file(path);
    Writer& w = file.writer();
    w.write_bytes(kCorpusMagic, sizeof(kCorpusMagic));
    w.write<std::uint32_t>(kCorpusVersion);
    w.write<std::uint64_t>(records.size());
    w.write<std::uint32_t>(static_cast<std::uint32_t>(visual_dim));
    w.write<std::uint32_t>(static_cast<std::uint32_t>(audio_dim));
    w.write<std::uint32_t>(static_cast<std::uint32_t>(max_label + 1));
    for (const FeatureRecord& record : records) {
        write_string(w, record.id);
        w.write<std::uint32_t>(static_cast<std::uint32_t>(record.labels.size()));
        for (const std::int32_t label : record.labels) w.write<std::int32_t>(label);
        for (const double v : record.visual) w.write<float>(static_cast<float>(v));
        for (const double v : record.audio) w.write<float>(static_cast<float>(v));
    }
    file.commit();
}

namespace {

CorpusHeader read_header(Reader& r, const std::string& path) {
    char magic[8];
    r.read_bytes(magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kCorpusMagic, sizeof(magic)) != 0) {
        throw FormatError(FormatError::Kind::BadMagic, path + ": not a corpus file (bad magic)");
    }
    CorpusHeader header;
    header.version = r.read<std::uint32_t>("version");
    if (header.version != kCorpusVersion) {
        throw FormatError(FormatError::Kind::VersionMismatch,
                          path + ": unsupported corpus version " + std::to_string(header.version));
    }
    header.count = r.read<std::uint64_t>("record count");
    header.visual_dim = r.read<std::uint32_t>("visual dim");
    header.audio_dim = r.read<std::uint32_t>("audio dim");
    header.class_count = r.read<std::uint32_t>("class count");
    if (header.visual_dim > kMaxFeatureDim || header.audio_dim > kMaxFeatureDim) {
        throw FormatError(FormatError::Kind::InvalidRecord,
                          path + ": implausible feature dimensions in header");
    }
    return header;
}

}  // namespace

CorpusHeader read_corpus_header(const std::string& path) {
    Reader r(path);
    return read_header(r, path);
}

Corpus read_corpus(const std::string& path) {
    Reader r(path);
    const CorpusHeader header = read_header(r, path);
    Corpus records;
    records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(header.count, 1 << 20)));
    std::unordered_set<std::string> seen;
    for (std::uint64_t i = 0; i < header.count; ++i) {
        const std::string context = "record " + std::to_string(i);
        FeatureRecord record;
        record.id = read_string(r, context + " id");
        const auto n_labels = r.read<std::uint32_t>(context + " label count");
        if (n_labels > kMaxLabelsPerRecord) {
            throw FormatError(FormatError::Kind::InvalidRecord,
                              context + ": implausible label count " + std::to_string(n_labels));
        }
        record.labels.resize(n_labels);
        for (auto& label : record.labels) label = r.read<std::int32_t>(context + " labels");
        record.visual.resize(header.visual_dim);
        for (double& v : record.visual) {
            v = static_cast<double>(r.read<float>(context + " visual features"));
        }
        record.audio.resize(header.audio_dim);
        for (double& v : record.audio) {
            v = static_cast<double>(r.read<float>(context + " audio features"));
        }
        validate_record(record, i);
        for (const std::int32_t label : record.labels) {
            if (static_cast<std::uint32_t>(label) >= header.class_count) {
                throw FormatError(FormatError::Kind::InvalidRecord,
                                  context + ": label " + std::to_string(label) +
                                      " exceeds the header class count");
            }
        }
        if (!seen.insert(record.id).second) {
            throw FormatError(FormatError::Kind::DuplicateId,
                              context + ": duplicate id '" + record.id + "'");
        }
        records.push_back(std::move(record));
    }
    if (!r.at_eof()) {
        throw FormatError(FormatError::Kind::DimMismatch,
                          path + ": trailing bytes after the last record (byte offset " +
                              std::to_string(r.offset()) + ")");
    }
    return records;
}

Corpus import_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path);
    Corpus records;
    std::string line;
    std::size_t line_number = 0;
    std::size_t visual_dim = 0;
    std::size_t audio_dim = 0;
    std::unordered_set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        if (line.back() == '\r') line.pop_back();
        const std::vector<std::string> fields = split(line, ',');
        if (fields.size() != 4) {
            throw FormatError(FormatError::Kind::ParseError,
                              "line " + std::to_string(line_number) + ": expected 4 fields, got " +
                                  std::to_string(fields.size()));
        }
        FeatureRecord record;
        record.id = fields[0];
        if (record.id.empty()) {
            throw FormatError(FormatError::Kind::ParseError,
                              "line " + std::to_string(line_number) + ": empty id");
        }
        if (fields[1].empty()) {
            throw FormatError(FormatError::Kind::ParseError,
                              "line " + std::to_string(line_number) + ": empty label field");
        }
        for (const std::string& token : split(fields[1], ';')) {
            record.labels.push_back(parse_label(token, line_number));
        }
        normalize_labels(record.labels);
        for (const std::string& token : split(fields[2], ';')) {
            record.visual.push_back(parse_double(token, line_number));
        }
        for (const std::string& token : split(fields[3], ';')) {
            record.audio.push_back(parse_double(token, line_number));
        }
        if (records.empty()) {
            visual_dim = record.visual.size();
            audio_dim = record.audio.size();
        } else if (record.visual.size() != visual_dim || record.audio.size() != audio_dim) {
            throw FormatError(FormatError::Kind::DimMismatch,
                              "line " + std::to_string(line_number) +
                                  ": feature dimensions differ from the first record");
        }
        if (!seen.insert(record.id).second) {
            throw FormatError(FormatError::Kind::DuplicateId,
                              "line " + std::to_string(line_number) + ": duplicate id '" +
                                  record.id + "'");
        }
        records.push_back(std::move(record));
    }
    return records;
}

void export_csv(const std::string& path, const Corpus& records) {
    std::ofstream out(path);
    if (!out) throw FormatError(FormatError::Kind::Io, "cannot open " + path + " for writing");
    out.precision(17);
    for (const FeatureRecord& record : records) {
        out << record.id << ',';
        for (std::size_t i = 0; i < record.labels.size(); ++i) {
            out << (i ? ";" : "") << record.labels[i];
        }
        out << ',';
        for (std::size_t i = 0; i < record.visual.size(); ++i) {
            out << (i ? ";" : "") << record.visual[i];
        }
        out << ',';
        for (std::size_t i = 0; i < record.audio.size(); ++i) {
            out << (i ? ";" : "") << record.audio[i];
        }
        out << '\n';
    }
    if (!out) throw FormatError(FormatError::Kind::Io, "write failed on " + path);
}

void SyntheticSpec::validate() const {
    if (num_records == 0) throw ConfigError("synthetic spec: record count must be positive");
    if (num_classes == 0) throw ConfigError("synthetic spec: class count must be positive");
    if (latent_dim == 0) throw ConfigError("synthetic spec: latent dim must be positive");
    if (labels_per_record == 0 || labels_per_record > num_classes) {
        throw ConfigError("synthetic spec: labels per record must be in [1, num_classes]");
    }
    if (noise_sigma < 0.0) throw ConfigError("synthetic spec: noise sigma must be nonnegative");
    if (latent_dim > std::min(visual_dim, audio_dim)) {
        throw ConfigError("synthetic spec: latent dim exceeds a feature dim");
    }
}

Corpus generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();

    Rng concept_rng = Rng::derive(spec.seed, 1);
    Matrix concepts(spec.num_classes, spec.latent_dim);
    for (double& v : concepts.data) v = concept_rng.next_normal();

    const double map_scale = std::sqrt(1.0 / static_cast<double>(spec.latent_dim));
    Rng map_rng = Rng::derive(spec.seed, 2);
    Matrix map_visual(spec.visual_dim, spec.latent_dim);
    for (double& v : map_visual.data) v = map_rng.next_normal() * map_scale;
    Matrix map_audio(spec.audio_dim, spec.latent_dim);
    for (double& v : map_audio.data) v = map_rng.next_normal() * map_scale;

    Corpus records;
    records.reserve(spec.num_records);
    for (std::size_t r = 0; r < spec.num_records; ++r) {
        Rng rng = Rng::derive(spec.seed, 16 + r);
        FeatureRecord record;
        {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "synth-%06zu", r);
            record.id = buf;
        }
        // Primary label cycles through the classes so corpora keep a
        // label-disjoint pair available for negative sampling.
        record.labels.push_back(static_cast<std::int32_t>(r % spec.num_classes));
        while (record.labels.size() < spec.labels_per_record) {
            const auto candidate =
                static_cast<std::int32_t>(rng.next_below(spec.num_classes));
            if (std::find(record.labels.begin(), record.labels.end(), candidate) ==
                record.labels.end()) {
                record.labels.push_back(candidate);
            }
        }
        normalize_labels(record.labels);

        Vec latent(spec.latent_dim, 0.0);
        for (const std::int32_t label : record.labels) {
            const double* concept_row = concepts.row_ptr(static_cast<std::size_t>(label));
            for (std::size_t k = 0; k < spec.latent_dim; ++k) latent[k] += concept_row[k];
        }
        const double inv_labels = 1.0 / static_cast<double>(record.labels.size());
        for (double& v : latent) v *= inv_labels;
        // Per-record latent perturbation, shared by both modalities: this is
        // what makes the exact counterpart of a record recoverable across
        // modalities rather than only its class.
        for (double& v : latent) v += spec.noise_sigma * rng.next_normal();

        record.visual = matvec(map_visual, latent);
        for (double& v : record.visual) v += spec.noise_sigma * rng.next_normal();
        record.audio = matvec(map_audio, latent);
        for (double& v : record.audio) v += spec.noise_sigma * rng.next_normal();
        records.push_back(std::move(record));
    }
    return records;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    AtomicFile file(path);
    Writer& w = file.writer();
    w.write_bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
    w.write<std::uint32_t>(kCheckpointVersion);
    write_config(w, checkpoint.config);
    w.write<std::uint64_t>(checkpoint.global_step);
    write_model(w, checkpoint.model);
    w.write<std::uint8_t>(checkpoint.has_moments ? 1 : 0);
    if (checkpoint.has_moments) {
        write_gradients(w, checkpoint.adam_m);
        write_gradients(w, checkpoint.adam_v);
    }
    file.commit();
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.read_bytes(magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw FormatError(FormatError::Kind::BadMagic,
                          path + ": not a checkpoint file (bad magic)");
    }
    const auto version = r.read<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw FormatError(FormatError::Kind::VersionMismatch,
                          path + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint checkpoint;
    checkpoint.config = read_config(r);
    checkpoint.global_step = r.read<std::uint64_t>("global step");
    checkpoint.model = read_model(r);
    check_model_matches_config(checkpoint.model, checkpoint.config);
    checkpoint.has_moments = r.read<std::uint8_t>("moments flag") != 0;
    if (checkpoint.has_moments) {
        checkpoint.adam_m = zeros_like(checkpoint.model);
        checkpoint.adam_v = zeros_like(checkpoint.model);
        read_gradients(r, checkpoint.adam_m);
        read_gradients(r, checkpoint.adam_v);
    }
    if (!r.at_eof()) {
        throw FormatError(FormatError::Kind::DimMismatch,
                          path + ": trailing bytes after checkpoint payload (byte offset " +
                              std::to_string(r.offset()) + ")");
    }
    return checkpoint;
}

}  // namespace crossmodal
