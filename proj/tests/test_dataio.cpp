#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unistd.h>

#include "crossmodal/dataio.hpp"
#include "crossmodal/errors.hpp"
#include "crossmodal/network.hpp"
#include "crossmodal/numerics.hpp"

using namespace crossmodal;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("crossmodal-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

// round features through float so binary round-trips compare exactly
double as_f32(double v) {
    return static_cast<double>(static_cast<float>(v));
}

Corpus random_corpus(std::size_t n, std::size_t visual_dim, std::size_t audio_dim, Rng& rng) {
    Corpus corpus;
    for (std::size_t i = 0; i < n; ++i) {
        FeatureRecord record;
        record.id = "r" + std::to_string(i);
        record.labels = {static_cast<std::int32_t>(rng.next_below(6)),
                         static_cast<std::int32_t>(6 + rng.next_below(6))};
        record.visual.resize(visual_dim);
        for (double& v : record.visual) v = as_f32(rng.next_normal());
        record.audio.resize(audio_dim);
        for (double& v : record.audio) v = as_f32(rng.next_normal());
        corpus.push_back(std::move(record));
    }
    return corpus;
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

void dump(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---- tiny symmetric eigensolver for the CCA oracle ----

void jacobi_eigen(Matrix a, Matrix& vectors, Vec& values) {
    const std::size_t n = a.rows;
    vectors = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) vectors(i, i) = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        }
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-18) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = vectors(k, p);
                    const double vkq = vectors(k, q);
                    vectors(k, p) = c * vkp - s * vkq;
                    vectors(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    values.resize(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = a(i, i);
}

Matrix mat_mul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    }
    return t;
}

Matrix inverse_sqrt(const Matrix& s) {
    Matrix vectors;
    Vec values;
    jacobi_eigen(s, vectors, values);
    Matrix scaled = vectors;  // vectors * diag(1/sqrt(lambda))
    for (std::size_t j = 0; j < s.cols; ++j) {
        const double lambda = std::max(values[j], 1e-12);
        const double inv = 1.0 / std::sqrt(lambda);
        for (std::size_t i = 0; i < s.rows; ++i) scaled(i, j) = vectors(i, j) * inv;
    }
    return mat_mul(scaled, transpose(vectors));
}

// Canonical correlations between the two raw feature blocks of a corpus.
Vec canonical_correlations(const Corpus& corpus) {
    const std::size_t n = corpus.size();
    const std::size_t dv = corpus.front().visual.size();
    const std::size_t da = corpus.front().audio.size();
    Vec mean_v(dv, 0.0);
    Vec mean_a(da, 0.0);
    for (const FeatureRecord& r : corpus) {
        for (std::size_t i = 0; i < dv; ++i) mean_v[i] += r.visual[i];
        for (std::size_t i = 0; i < da; ++i) mean_a[i] += r.audio[i];
    }
    for (double& m : mean_v) m /= static_cast<double>(n);
    for (double& m : mean_a) m /= static_cast<double>(n);

    Matrix cvv(dv, dv);
    Matrix caa(da, da);
    Matrix cva(dv, da);
    for (const FeatureRecord& r : corpus) {
        for (std::size_t i = 0; i < dv; ++i) {
            const double xi = r.visual[i] - mean_v[i];
            for (std::size_t j = 0; j < dv; ++j) cvv(i, j) += xi * (r.visual[j] - mean_v[j]);
            for (std::size_t j = 0; j < da; ++j) cva(i, j) += xi * (r.audio[j] - mean_a[j]);
        }
        for (std::size_t i = 0; i < da; ++i) {
            const double xi = r.audio[i] - mean_a[i];
            for (std::size_t j = 0; j < da; ++j) caa(i, j) += xi * (r.audio[j] - mean_a[j]);
        }
    }
    const double scale = 1.0 / static_cast<double>(n - 1);
    for (double& v : cvv.data) v *= scale;
    for (double& v : caa.data) v *= scale;
    for (double& v : cva.data) v *= scale;

    const Matrix m = mat_mul(mat_mul(inverse_sqrt(cvv), cva), inverse_sqrt(caa));
    Matrix mtm = mat_mul(transpose(m), m);
    Matrix vectors;
    Vec values;
    jacobi_eigen(mtm, vectors, values);
    std::sort(values.begin(), values.end(), std::greater<double>());
    Vec correlations;
    for (const double v : values) correlations.push_back(std::sqrt(std::max(v, 0.0)));
    return correlations;
}

}  // namespace

TEST_CASE("binary corpus round-trips field-identically") {
    TempDir dir;
    Rng rng(1);
    const Corpus corpus = random_corpus(100, 9, 5, rng);
    const std::string path = dir.file("c.bin");
    write_corpus(path, corpus);
    const Corpus loaded = read_corpus(path);
    REQUIRE(loaded.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(loaded[i].id == corpus[i].id);
        CHECK(loaded[i].labels == corpus[i].labels);
        CHECK(loaded[i].visual == corpus[i].visual);
        CHECK(loaded[i].audio == corpus[i].audio);
    }

    const CorpusHeader header = read_corpus_header(path);
    CHECK(header.count == 100);
    CHECK(header.visual_dim == 9);
    CHECK(header.audio_dim == 5);
    CHECK(header.class_count == 12);
}

TEST_CASE("truncated corpus reports the failing record") {
    TempDir dir;
    Rng rng(2);
    const Corpus corpus = random_corpus(10, 4, 3, rng);
    const std::string path = dir.file("c.bin");
    write_corpus(path, corpus);
    auto bytes = slurp(path);
    bytes.resize(bytes.size() - 7);
    dump(path, bytes);
    try {
        read_corpus(path);
        FAIL("expected a truncation error");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::Truncated);
        CHECK(std::string(e.what()).find("record 9") != std::string::npos);
    }
}

TEST_CASE("bad magic is rejected") {
    TempDir dir;
    Rng rng(3);
    write_corpus(dir.file("c.bin"), random_corpus(2, 2, 2, rng));
    auto bytes = slurp(dir.file("c.bin"));
    bytes[0] = 'X';
    dump(dir.file("c.bin"), bytes);
    try {
        read_corpus(dir.file("c.bin"));
        FAIL("expected a magic error");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::BadMagic);
    }
}

TEST_CASE("writer rejects inconsistent feature dims and duplicate ids") {
    TempDir dir;
    Rng rng(4);
    Corpus corpus = random_corpus(3, 4, 3, rng);
    corpus[2].visual.push_back(1.0);
    CHECK_THROWS_AS(write_corpus(dir.file("bad.bin"), corpus), FormatError);

    Corpus dupes = random_corpus(3, 4, 3, rng);
    dupes[2].id = dupes[0].id;
    try {
        write_corpus(dir.file("dupe.bin"), dupes);
        FAIL("expected a duplicate-id error");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::DuplicateId);
    }
}

TEST_CASE("reader rejects duplicate ids") {
    TempDir dir;
    Corpus corpus;
    for (const char* id : {"a", "b"}) {
        FeatureRecord r;
        r.id = id;
        r.labels = {0};
        r.visual = {1.0};
        r.audio = {1.0};
        corpus.push_back(r);
    }
    const std::string path = dir.file("c.bin");
    write_corpus(path, corpus);
    auto bytes = slurp(path);
    // patch the single-byte id "b" to "a"
    for (std::size_t i = 0; i + 1 < bytes.size(); ++i) {
        if (bytes[i] == 'b') bytes[i] = 'a';
    }
    dump(path, bytes);
    try {
        read_corpus(path);
        FAIL("expected a duplicate-id error");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::DuplicateId);
    }
}

TEST_CASE("random byte corruption never escapes as anything but FormatError") {
    TempDir dir;
    Rng rng(5);
    const Corpus corpus = random_corpus(6, 3, 2, rng);
    const std::string clean = dir.file("clean.bin");
    write_corpus(clean, corpus);
    const auto original = slurp(clean);

    Rng fuzz(99);
    for (int trial = 0; trial < 200; ++trial) {
        auto bytes = original;
        const std::size_t flips = 1 + fuzz.next_below(4);
        for (std::size_t f = 0; f < flips; ++f) {
            const std::size_t pos = fuzz.next_below(bytes.size());
            bytes[pos] = static_cast<char>(bytes[pos] ^ (1 << fuzz.next_below(8)));
        }
        if (fuzz.next_double() < 0.3) bytes.resize(fuzz.next_below(bytes.size()) + 1);
        const std::string path = dir.file("fuzz.bin");
        dump(path, bytes);
        try {
            const Corpus loaded = read_corpus(path);
            for (std::size_t i = 0; i < loaded.size(); ++i) validate_record(loaded[i], i);
        } catch (const FormatError&) {
            // expected for most mutations
        }
    }
    CHECK(true);  // reaching here means no crash and no foreign exception
}

TEST_CASE("csv import parses well-formed rows") {
    TempDir dir;
    const std::string path = dir.file("c.csv");
    {
        std::ofstream out(path);
        out << "vid-a,0;2,1.5;2.5;-3.0,0.25;0.125\n";
        out << "vid-b,1,2.5e2;1e-3;4.0,1.0;2.0\n";
        out << "vid-c,3;4;5,0;0;0,-1;1\n";
    }
    const Corpus corpus = import_csv(path);
    REQUIRE(corpus.size() == 3);
    CHECK(corpus[0].id == "vid-a");
    CHECK(corpus[0].labels == std::vector<std::int32_t>{0, 2});
    CHECK(corpus[0].visual == Vec{1.5, 2.5, -3.0});
    CHECK(corpus[0].audio == Vec{0.25, 0.125});

    // scientific notation must land exactly on the reference parse
    CHECK(corpus[1].visual[0] == std::strtod("2.5e2", nullptr));
    CHECK(corpus[1].visual[1] == std::strtod("1e-3", nullptr));
    CHECK(corpus[1].visual[0] == 250.0);
}

TEST_CASE("csv import reports the offending line") {
    TempDir dir;
    const std::string path = dir.file("bad.csv");
    {
        std::ofstream out(path);
        out << "vid-a,0,1.0;2.0,3.0\n";
        out << "vid-b,,1.0;2.0,3.0\n";  // empty label field
    }
    try {
        import_csv(path);
        FAIL("expected a parse error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    const std::string dims = dir.file("dims.csv");
    {
        std::ofstream out(dims);
        out << "vid-a,0,1.0;2.0,3.0\n";
        out << "vid-b,1,1.0,3.0\n";  // visual dim shrank
    }
    try {
        import_csv(dims);
        FAIL("expected a dim error");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::DimMismatch);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("csv export and import round-trip") {
    TempDir dir;
    Rng rng(6);
    const Corpus corpus = random_corpus(5, 3, 2, rng);
    export_csv(dir.file("c.csv"), corpus);
    const Corpus loaded = import_csv(dir.file("c.csv"));
    REQUIRE(loaded.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(loaded[i].id == corpus[i].id);
        CHECK(loaded[i].labels == corpus[i].labels);
        CHECK(loaded[i].visual == corpus[i].visual);
        CHECK(loaded[i].audio == corpus[i].audio);
    }
}

TEST_CASE("noiseless synthetic records collapse onto their class") {
    SyntheticSpec spec;
    spec.num_records = 12;
    spec.num_classes = 3;
    spec.latent_dim = 4;
    spec.noise_sigma = 0.0;
    spec.visual_dim = 8;
    spec.audio_dim = 6;
    spec.seed = 7;
    const Corpus corpus = generate_synthetic(spec);
    REQUIRE(corpus.size() == 12);
    for (const FeatureRecord& r : corpus) {
        const FeatureRecord& rep = corpus[static_cast<std::size_t>(r.labels[0])];
        CHECK(r.visual == rep.visual);
        CHECK(r.audio == rep.audio);
    }
}

TEST_CASE("synthetic generation is seed-deterministic") {
    SyntheticSpec spec;
    spec.num_records = 20;
    spec.num_classes = 4;
    spec.latent_dim = 4;
    spec.visual_dim = 8;
    spec.audio_dim = 6;
    spec.seed = 11;
    const Corpus a = generate_synthetic(spec);
    const Corpus b = generate_synthetic(spec);
    spec.seed = 12;
    const Corpus c = generate_synthetic(spec);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].visual == b[i].visual);
        CHECK(a[i].audio == b[i].audio);
    }
    CHECK(a[0].visual != c[0].visual);
}

TEST_CASE("synthetic corpora expose every class and admit negatives") {
    SyntheticSpec spec;
    spec.num_records = 10;
    spec.num_classes = 5;
    spec.latent_dim = 3;
    spec.visual_dim = 4;
    spec.audio_dim = 4;
    const Corpus corpus = generate_synthetic(spec);
    std::set<std::int32_t> classes;
    for (const FeatureRecord& r : corpus) {
        REQUIRE(r.labels.size() == 1);
        classes.insert(r.labels[0]);
    }
    CHECK(classes.size() == 5);
}

TEST_CASE("cross-modal CCA recovers the shared latent factors") {
    SyntheticSpec spec;
    spec.num_records = 2000;
    spec.num_classes = 8;
    spec.latent_dim = 4;
    spec.noise_sigma = 0.01;
    spec.visual_dim = 12;
    spec.audio_dim = 8;
    spec.seed = 21;
    const Corpus corpus = generate_synthetic(spec);
    const Vec correlations = canonical_correlations(corpus);
    REQUIRE(correlations.size() >= spec.latent_dim);
    for (std::size_t i = 0; i < spec.latent_dim; ++i) {
        CHECK(correlations[i] > 0.9);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    TempDir dir;
    TrainingConfig config;
    config.visual_input_dim = 6;
    config.audio_input_dim = 4;
    config.visual_widths = {5};
    config.audio_widths = {3};
    config.embedding_dim = 3;
    config.num_classes = 4;
    config.seed = 31;

    Rng rng(31);
    Checkpoint original;
    original.config = config;
    original.model = init_model(config.model_config(), rng);
    original.global_step = 17;
    original.has_moments = true;
    original.adam_m = zeros_like(original.model);
    original.adam_v = zeros_like(original.model);
    for (auto& view : parameter_views(original.adam_m)) {
        for (std::size_t i = 0; i < view.size; ++i) view.data[i] = rng.next_normal();
    }

    const std::string path = dir.file("model.ckpt");
    save_checkpoint(path, original);
    const Checkpoint loaded = load_checkpoint(path);

    CHECK(loaded.global_step == 17);
    CHECK(loaded.config.num_classes == 4);
    CHECK(loaded.config.visual_widths == config.visual_widths);

    const auto a = parameter_views(original.model);
    const auto b = parameter_views(loaded.model);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].size == b[i].size);
        for (std::size_t j = 0; j < a[i].size; ++j) CHECK(a[i].data[j] == b[i].data[j]);
    }
    const auto ma = parameter_views(original.adam_m);
    const auto mb = parameter_views(loaded.adam_m);
    for (std::size_t i = 0; i < ma.size(); ++i) {
        for (std::size_t j = 0; j < ma[i].size; ++j) CHECK(ma[i].data[j] == mb[i].data[j]);
    }

    // identical forward outputs
    Rng in(5);
    Vec x(config.visual_input_dim);
    for (double& v : x) v = in.next_normal();
    CHECK(forward_branch(original.model.visual, x).embedding ==
          forward_branch(loaded.model.visual, x).embedding);
}

TEST_CASE("checkpoint loader rejects a model that disagrees with its config") {
    TempDir dir;
    TrainingConfig config;
    config.visual_input_dim = 6;
    config.audio_input_dim = 4;
    config.visual_widths = {5};
    config.audio_widths = {3};
    config.embedding_dim = 3;
    config.num_classes = 4;

    Rng rng(41);
    Checkpoint checkpoint;
    checkpoint.config = config;
    checkpoint.config.visual_widths = {9};  // disagrees with the stored model
    checkpoint.model = init_model(config.model_config(), rng);
    const std::string path = dir.file("bad.ckpt");
    save_checkpoint(path, checkpoint);
    try {
        load_checkpoint(path);
        FAIL("expected a shape error");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::DimMismatch);
    }
}

TEST_CASE("checkpoint loader flags version and truncation problems") {
    TempDir dir;
    TrainingConfig config;
    config.visual_input_dim = 3;
    config.audio_input_dim = 2;
    config.visual_widths = {2};
    config.audio_widths = {2};
    config.embedding_dim = 2;
    config.num_classes = 2;
    Rng rng(43);
    Checkpoint checkpoint;
    checkpoint.config = config;
    checkpoint.model = init_model(config.model_config(), rng);
    const std::string path = dir.file("m.ckpt");
    save_checkpoint(path, checkpoint);

    auto bytes = slurp(path);
    auto versioned = bytes;
    versioned[8] = 9;  // version field follows the 8-byte magic
    dump(dir.file("v.ckpt"), versioned);
    try {
        load_checkpoint(dir.file("v.ckpt"));
        FAIL("expected a version error");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::VersionMismatch);
    }

    auto truncated = bytes;
    truncated.resize(truncated.size() / 2);
    dump(dir.file("t.ckpt"), truncated);
    try {
        load_checkpoint(dir.file("t.ckpt"));
        FAIL("expected a truncation error");
    } catch (const FormatError& e) {
        CHECK(e.kind == FormatError::Kind::Truncated);
    }
}
