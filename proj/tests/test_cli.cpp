#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "crossmodal/dataio.hpp"
#include "crossmodal/retrieval.hpp"

// End-to-end tests driving the built binary (path injected by CMake).

using namespace crossmodal;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

struct Workspace {
    std::filesystem::path dir;
    Workspace() {
        dir = std::filesystem::temp_directory_path() /
              ("crossmodal-cli-" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir);
    }
    ~Workspace() { std::filesystem::remove_all(dir); }
    std::string file(const std::string& name) const { return (dir / name).string(); }

    RunResult run(const std::string& args, const std::string& env = "") const {
        const std::string out_path = file("stdout.txt");
        const std::string err_path = file("stderr.txt");
        const std::string command = env + (env.empty() ? "" : " ") + CROSSMODAL_CLI_PATH + " " +
                                    args + " > " + out_path + " 2> " + err_path;
        const int status = std::system(command.c_str());
        RunResult result;
        result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        result.out = slurp(out_path);
        result.err = slurp(err_path);
        return result;
    }
};

// one shared corpus + model, trained once, reused across the cases below
struct Fixture {
    Workspace ws;
    std::string corpus = ws.file("c.bin");
    std::string ckpt = ws.file("m.ckpt");
    std::string log = ws.file("train.log");

    Fixture() {
        const RunResult gen = ws.run(
            "gen-data --n 96 --classes 8 --latent-dim 6 --noise-sigma 0.1 --visual-dim 16 "
            "--audio-dim 12 --seed 4 --out " +
            corpus);
        REQUIRE(gen.exit_code == 0);
        const RunResult train = ws.run(
            "train --corpus " + corpus + " --out " + ckpt + " --log " + log +
            " --batch-size 32 --epochs 4 --lr 2e-3 --visual-widths 12 --audio-widths 10 "
            "--embedding-dim 6 --lambda-step 6 --seed 5");
        REQUIRE(train.exit_code == 0);
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("gen-data is byte-deterministic and validates flags") {
    Workspace ws;
    const std::string args =
        "gen-data --n 40 --classes 4 --latent-dim 4 --visual-dim 8 --audio-dim 8 --seed 7 --out ";
    CHECK(ws.run(args + ws.file("a.bin")).exit_code == 0);
    CHECK(ws.run(args + ws.file("b.bin")).exit_code == 0);
    CHECK(slurp(ws.file("a.bin")) == slurp(ws.file("b.bin")));
    CHECK_FALSE(slurp(ws.file("a.bin")).empty());

    const RunResult bad = ws.run("gen-data --n 0 --out " + ws.file("x.bin"));
    CHECK(bad.exit_code != 0);
    CHECK(bad.err.find("positive") != std::string::npos);

    const RunResult unknown = ws.run("gen-data --n 4 --out " + ws.file("y.bin") + " --bogus");
    CHECK(unknown.exit_code != 0);
}

TEST_CASE("the seed environment variable fills in when the flag is absent") {
    Workspace ws;
    const std::string common =
        "gen-data --n 24 --classes 4 --latent-dim 4 --visual-dim 8 --audio-dim 8 --out ";
    CHECK(ws.run(common + ws.file("env.bin"), "CROSSMODAL_SEED=11").exit_code == 0);
    CHECK(ws.run(common + ws.file("flag.bin") + " --seed 11").exit_code == 0);
    CHECK(slurp(ws.file("env.bin")) == slurp(ws.file("flag.bin")));
}

TEST_CASE("train writes a checkpoint and a well-formed log") {
    Fixture& f = fixture();
    CHECK(std::filesystem::exists(f.ckpt));
    const Checkpoint checkpoint = load_checkpoint(f.ckpt);
    CHECK(checkpoint.global_step == 12);  // 96/32 * 4 epochs
    CHECK(checkpoint.config.embedding_dim == 6);

    std::ifstream log(f.log);
    std::string header;
    std::getline(log, header);
    CHECK(header == "step\tlambda\tl_cos\tl_class\tl2\ttotal");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(log, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 12);
}

TEST_CASE("train rejects a zero epoch count") {
    Fixture& f = fixture();
    const RunResult r = f.ws.run("train --corpus " + f.corpus + " --out " +
                                 f.ws.file("zero.ckpt") + " --epochs 0 --batch-size 32");
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("epoch") != std::string::npos);
}

TEST_CASE("lambda-step zero activates the classification term immediately") {
    Fixture& f = fixture();
    const std::string log = f.ws.file("immediate.log");
    const RunResult r = f.ws.run(
        "train --corpus " + f.corpus + " --out " + f.ws.file("imm.ckpt") + " --log " + log +
        " --batch-size 32 --epochs 1 --visual-widths 12 --audio-widths 10 --embedding-dim 6 "
        "--lambda-step 0 --lambda 0.02 --seed 6");
    REQUIRE(r.exit_code == 0);
    std::ifstream in(log);
    std::string header;
    std::getline(in, header);
    std::string first_row;
    std::getline(in, first_row);
    std::istringstream columns(first_row);
    std::size_t step;
    double lambda, l_cos, l_class;
    columns >> step >> lambda >> l_cos >> l_class;
    CHECK(step == 0);
    CHECK(lambda == 0.02);
    CHECK(l_class > 0.0);
}

TEST_CASE("eval prints both directions in the table layout") {
    Fixture& f = fixture();
    const std::string csv = f.ws.file("recall.csv");
    const RunResult r = f.ws.run("eval --checkpoint " + f.ckpt + " --corpus " + f.corpus +
                                 " --pools 24,48 --ks 1,5,10 --seed 1 --out " + csv);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("Recall from audio to video") != std::string::npos);
    CHECK(r.out.find("Recall from video to audio") != std::string::npos);
    CHECK(r.out.find("Number of elements") != std::string::npos);
    CHECK(r.out.find("24") != std::string::npos);
    CHECK(slurp(csv).find("audio-to-video,24,1,") != std::string::npos);

    const RunResult too_big = f.ws.run("eval --checkpoint " + f.ckpt + " --corpus " + f.corpus +
                                       " --pools 9999 --ks 1");
    CHECK(too_big.exit_code != 0);
    CHECK(too_big.err.find("pool") != std::string::npos);
}

TEST_CASE("query output matches the library ranking") {
    Fixture& f = fixture();
    const RunResult r = f.ws.run("query --checkpoint " + f.ckpt + " --corpus " + f.corpus +
                                 " --id synth-000003 --direction video-to-audio --k 5");
    REQUIRE(r.exit_code == 0);

    const Checkpoint checkpoint = load_checkpoint(f.ckpt);
    const EmbeddingStore store = build_store(checkpoint.model, read_corpus(f.corpus));
    const RetrievalResult expected =
        query_cross_modal(store, "synth-000003", Direction::VideoToAudio, false, 5);

    // 5 result rows, scores descending, top hit identical to the library path
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);  // "query ..." banner
    std::getline(lines, line);  // column header
    std::vector<std::pair<std::string, double>> rows;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::istringstream cells(line);
        std::size_t rank_col;
        std::string id;
        double score;
        cells >> rank_col >> id >> score;
        rows.emplace_back(id, score);
    }
    REQUIRE(rows.size() == 5);
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        CHECK(rows[i].second >= rows[i + 1].second);
    }
    CHECK(rows[0].first == expected.ranked[0].id);
    CHECK(rows[0].second == doctest::Approx(expected.ranked[0].score).epsilon(1e-5));

    const RunResult excl = f.ws.run("query --checkpoint " + f.ckpt + " --corpus " + f.corpus +
                                    " --id synth-000003 --exclude-self --k 96");
    CHECK(excl.exit_code == 0);
    std::istringstream excl_lines(excl.out);
    std::getline(excl_lines, line);  // banner
    std::getline(excl_lines, line);  // header
    std::size_t result_rows = 0;
    while (std::getline(excl_lines, line)) {
        if (line.empty()) continue;
        std::istringstream cells(line);
        std::size_t rank_col;
        std::string id;
        cells >> rank_col >> id;
        CHECK(id != "synth-000003");
        ++result_rows;
    }
    CHECK(result_rows == 95);  // everything except the query itself

    const RunResult missing = f.ws.run("query --checkpoint " + f.ckpt + " --corpus " + f.corpus +
                                       " --id nope");
    CHECK(missing.exit_code != 0);
}

TEST_CASE("embed exports reproduce the query scores externally") {
    Fixture& f = fixture();
    const std::string csv = f.ws.file("emb.csv");
    REQUIRE(f.ws.run("embed --checkpoint " + f.ckpt + " --corpus " + f.corpus + " --out " + csv)
                .exit_code == 0);

    // independent re-computation: parse the csv, cosine-rank by hand
    std::ifstream in(csv);
    std::string line;
    std::vector<std::string> ids;
    std::vector<Vec> visual, audio;
    while (std::getline(in, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        ids.push_back(line.substr(0, c1));
        auto parse = [](const std::string& s) {
            Vec v;
            std::istringstream ss(s);
            std::string tok;
            while (std::getline(ss, tok, ';')) v.push_back(std::stod(tok));
            return v;
        };
        visual.push_back(parse(line.substr(c1 + 1, c2 - c1 - 1)));
        audio.push_back(parse(line.substr(c2 + 1)));
    }
    REQUIRE(ids.size() == 96);

    const std::size_t q = 3;  // synth-000003, video-to-audio
    std::string best_id;
    double best_score = -2.0;
    for (std::size_t j = 0; j < ids.size(); ++j) {
        double d = 0.0, nq = 0.0, nc = 0.0;
        for (std::size_t t = 0; t < visual[q].size(); ++t) {
            d += visual[q][t] * audio[j][t];
            nq += visual[q][t] * visual[q][t];
            nc += audio[j][t] * audio[j][t];
        }
        const double s = d / std::sqrt(nq * nc);
        if (s > best_score) {
            best_score = s;
            best_id = ids[j];
        }
    }

    const Checkpoint checkpoint = load_checkpoint(f.ckpt);
    const EmbeddingStore store = build_store(checkpoint.model, read_corpus(f.corpus));
    const RetrievalResult expected =
        query_cross_modal(store, "synth-000003", Direction::VideoToAudio, false, 1);
    CHECK(best_id == expected.ranked[0].id);
    CHECK(best_score == doctest::Approx(expected.ranked[0].score).epsilon(1e-9));

    // deterministic across runs
    const std::string csv2 = f.ws.file("emb2.csv");
    REQUIRE(f.ws.run("embed --checkpoint " + f.ckpt + " --corpus " + f.corpus + " --out " + csv2)
                .exit_code == 0);
    CHECK(slurp(csv) == slurp(csv2));
}

TEST_CASE("embed binary format reads back as a corpus of embeddings") {
    Fixture& f = fixture();
    const std::string bin = f.ws.file("emb.bin");
    REQUIRE(f.ws.run("embed --checkpoint " + f.ckpt + " --corpus " + f.corpus + " --out " + bin +
                     " --format binary")
                .exit_code == 0);
    const Corpus embedded = read_corpus(bin);
    REQUIRE(embedded.size() == 96);
    CHECK(embedded[0].visual.size() == 6);
    CHECK(embedded[0].audio.size() == 6);
}

TEST_CASE("config files provide defaults that flags override") {
    Workspace ws;
    const std::string ini = ws.file("gen.ini");
    {
        std::ofstream out(ini);
        out << "[gen-data]\nn=20\nclasses=4\nlatent-dim=4\nvisual-dim=8\naudio-dim=8\nseed=3\n";
    }
    const std::string from_file = ws.file("file.bin");
    REQUIRE(ws.run("--config " + ini + " gen-data --out " + from_file).exit_code == 0);
    CHECK(read_corpus_header(from_file).count == 20);

    const std::string overridden = ws.file("override.bin");
    REQUIRE(ws.run("--config " + ini + " gen-data --n 8 --out " + overridden).exit_code == 0);
    CHECK(read_corpus_header(overridden).count == 8);
}
