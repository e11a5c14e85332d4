// Command-line front end: synthetic data generation, training, recall
// evaluation, single queries and embedding export over the same library the
// tests exercise.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crossmodal/dataio.hpp"
#include "crossmodal/errors.hpp"
#include "crossmodal/retrieval.hpp"
#include "crossmodal/trainer.hpp"

namespace {

using namespace crossmodal;

struct GenDataArgs {
    SyntheticSpec spec;
    std::string out;
};

struct TrainArgs {
    TrainingConfig config;
    std::string corpus_path;
    std::string checkpoint_path = "model.ckpt";
    std::string log_path;
    std::size_t num_classes_override = 0;
    bool paper_defaults = false;
};

struct EvalArgs {
    std::string checkpoint_path;
    std::string corpus_path;
    std::vector<std::size_t> pools{256, 512, 1024};
    std::vector<std::size_t> ks{1, 5, 10};
    std::uint64_t seed = 0;
    std::string out;
};

struct QueryArgs {
    std::string checkpoint_path;
    std::string corpus_path;
    std::string id;
    std::string direction = "video-to-audio";
    std::size_t k = 5;
    bool exclude_self = false;
};

struct EmbedArgs {
    std::string checkpoint_path;
    std::string corpus_path;
    std::string out;
    std::string format = "csv";
};

Direction parse_direction(const std::string& name) {
    if (name == "audio-to-video") return Direction::AudioToVideo;
    if (name == "video-to-audio") return Direction::VideoToAudio;
    throw ConfigError("unknown direction '" + name +
                      "' (expected audio-to-video or video-to-audio)");
}

void apply_paper_defaults(TrainingConfig& config) {
    config.batch_size = 1024;
    config.lambda_value = 0.02;
    config.lambda_activation_step = 10000;
    config.margin_alpha = 0.2;
    config.p_negative = 0.6;
    config.visual_widths = {2000, 2000, 700, 700};
    config.audio_widths = {450, 450, 200, 200};
    config.embedding_dim = 250;
    config.epochs = 1;
}

int run_gen_data(const GenDataArgs& args) {
    const Corpus corpus = generate_synthetic(args.spec);
    write_corpus(args.out, corpus);
    std::cout << "wrote " << corpus.size() << " records (visual dim " << args.spec.visual_dim
              << ", audio dim " << args.spec.audio_dim << ", " << args.spec.num_classes
              << " classes) to " << args.out << "\n";
    return 0;
}

int run_train(TrainArgs& args) {
    const CorpusHeader header = read_corpus_header(args.corpus_path);
    const Corpus corpus = read_corpus(args.corpus_path);

    TrainingConfig& config = args.config;
    if (args.paper_defaults) apply_paper_defaults(config);
    config.visual_input_dim = header.visual_dim;
    config.audio_input_dim = header.audio_dim;
    config.num_classes =
        args.num_classes_override ? args.num_classes_override : header.class_count;
    config.validate();

    std::ofstream log;
    if (!args.log_path.empty()) {
        log.open(args.log_path);
        if (!log) throw FormatError(FormatError::Kind::Io, "cannot open " + args.log_path);
        log << log_header_row() << '\n';
    }

    const std::size_t steps_per_epoch = corpus.size() / config.batch_size;
    const std::size_t total_steps = steps_per_epoch * config.epochs;
    std::cout << "training on " << corpus.size() << " records: " << total_steps << " steps ("
              << config.epochs << " epochs x " << steps_per_epoch << " batches)\n";

    const FitResult result = fit(corpus, config, [&](const LogRow& row) {
        if (log.is_open()) log << format_log_row(row) << '\n';
        if (row.step % 50 == 0 || row.step + 1 == total_steps) {
            std::cout << "step " << row.step << "  lambda " << row.lambda << "  l_cos "
                      << row.cosine << "  l_class " << row.classification << "  total "
                      << row.total << "\n";
        }
    });
    if (log.is_open() && !log) {
        throw FormatError(FormatError::Kind::Io, "write failed on " + args.log_path);
    }

    save_checkpoint(args.checkpoint_path, to_checkpoint(result.state, config));
    std::cout << "saved checkpoint to " << args.checkpoint_path;
    if (!args.log_path.empty()) std::cout << ", log to " << args.log_path;
    std::cout << "\n";
    return 0;
}

EmbeddingStore load_store(const std::string& checkpoint_path, const std::string& corpus_path) {
    const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
    const Corpus corpus = read_corpus(corpus_path);
    return build_store(checkpoint.model, corpus);
}

int run_eval(const EvalArgs& args) {
    if (args.pools.empty() || args.ks.empty()) {
        throw ConfigError("eval needs at least one pool size and one k");
    }
    for (const std::size_t k : args.ks) {
        for (const std::size_t pool : args.pools) {
            if (k > pool) {
                throw ConfigError("k = " + std::to_string(k) + " exceeds pool size " +
                                  std::to_string(pool));
            }
        }
    }
    const EmbeddingStore store = load_store(args.checkpoint_path, args.corpus_path);
    const RecallTable table = recall_table(store, args.pools, args.ks, args.seed);
    std::cout << format_recall_table(table, Direction::AudioToVideo) << '\n'
              << format_recall_table(table, Direction::VideoToAudio);
    if (!args.out.empty()) {
        std::ofstream out(args.out);
        if (!out) throw FormatError(FormatError::Kind::Io, "cannot open " + args.out);
        out << recall_table_csv(table);
    }
    return 0;
}

int run_query(const QueryArgs& args) {
    const EmbeddingStore store = load_store(args.checkpoint_path, args.corpus_path);
    const RetrievalResult result = query_cross_modal(store, args.id,
                                                     parse_direction(args.direction),
                                                     args.exclude_self, args.k);
    std::cout << "query " << args.id << " (" << direction_name(result.direction) << ")\n";
    std::printf("%-6s%-24s%s\n", "rank", "id", "score");
    for (std::size_t i = 0; i < result.ranked.size(); ++i) {
        std::printf("%-6zu%-24s%.6f\n", i + 1, result.ranked[i].id.c_str(),
                    result.ranked[i].score);
    }
    return 0;
}

int run_embed(const EmbedArgs& args) {
    const EmbeddingStore store = load_store(args.checkpoint_path, args.corpus_path);
    if (store.size() == 0) throw ConfigError("embed: corpus is empty");

    if (args.format == "csv") {
        std::ofstream out(args.out);
        if (!out) throw FormatError(FormatError::Kind::Io, "cannot open " + args.out);
        out.precision(17);
        for (std::size_t i = 0; i < store.size(); ++i) {
            out << store.ids[i] << ',';
            for (std::size_t j = 0; j < store.dim(); ++j) {
                out << (j ? ";" : "") << store.visual_embeddings(i, j);
            }
            out << ',';
            for (std::size_t j = 0; j < store.dim(); ++j) {
                out << (j ? ";" : "") << store.audio_embeddings(i, j);
            }
            out << '\n';
        }
        if (!out) throw FormatError(FormatError::Kind::Io, "write failed on " + args.out);
    } else if (args.format == "binary") {
        // embeddings re-use the corpus container: visual = phi_i, audio = phi_a
        Corpus embedded;
        for (std::size_t i = 0; i < store.size(); ++i) {
            FeatureRecord record;
            record.id = store.ids[i];
            record.labels = store.labels[i];
            record.visual.assign(store.visual_embeddings.row_ptr(i),
                                 store.visual_embeddings.row_ptr(i) + store.dim());
            record.audio.assign(store.audio_embeddings.row_ptr(i),
                                store.audio_embeddings.row_ptr(i) + store.dim());
            embedded.push_back(std::move(record));
        }
        write_corpus(args.out, embedded);
    } else {
        throw ConfigError("unknown embed format '" + args.format + "' (csv or binary)");
    }
    std::cout << "wrote " << store.size() << " embedding pairs (dim " << store.dim() << ") to "
              << args.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint audio-visual embedding training and cross-modal retrieval"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a key=value file");

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic corpus");
    gen_cmd->add_option("--n", gen.spec.num_records, "Number of records")->required();
    gen_cmd->add_option("--classes", gen.spec.num_classes, "Number of classes");
    gen_cmd->add_option("--latent-dim", gen.spec.latent_dim, "Shared latent dimensionality");
    gen_cmd->add_option("--noise-sigma", gen.spec.noise_sigma, "Perturbation scale");
    gen_cmd->add_option("--labels-per-record", gen.spec.labels_per_record, "Labels per record");
    gen_cmd->add_option("--visual-dim", gen.spec.visual_dim, "Visual feature dimension");
    gen_cmd->add_option("--audio-dim", gen.spec.audio_dim, "Audio feature dimension");
    gen_cmd->add_option("--seed", gen.spec.seed, "Generator seed")->envname("CROSSMODAL_SEED");
    gen_cmd->add_option("--out", gen.out, "Output corpus file")->required();

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a joint embedding model");
    train_cmd->add_option("--corpus", train.corpus_path, "Input corpus file")->required();
    train_cmd->add_option("--out", train.checkpoint_path, "Checkpoint output path");
    train_cmd->add_option("--log", train.log_path, "Per-step training log (TSV)");
    train_cmd->add_option("--batch-size", train.config.batch_size, "Batch size");
    train_cmd->add_option("--margin", train.config.margin_alpha, "Margin alpha");
    train_cmd->add_option("--p-negative", train.config.p_negative, "Negative pair fraction");
    train_cmd->add_option("--lambda", train.config.lambda_value, "Classification weight");
    train_cmd->add_option("--lambda-step", train.config.lambda_activation_step,
                          "Step at which lambda activates");
    train_cmd->add_option("--epochs", train.config.epochs, "Training epochs");
    train_cmd->add_option("--lr", train.config.learning_rate, "Learning rate");
    train_cmd
        ->add_option_function<std::string>(
            "--optimizer",
            [&train](const std::string& name) {
                if (name == "adam") {
                    train.config.optimizer = OptimizerKind::Adam;
                } else if (name == "sgd") {
                    train.config.optimizer = OptimizerKind::Sgd;
                } else {
                    throw CLI::ValidationError("--optimizer must be adam or sgd");
                }
            },
            "Optimizer (adam or sgd)")
        ->default_str("adam");
    train_cmd->add_option("--l2", train.config.l2_coefficient, "L2 penalty coefficient");
    train_cmd->add_flag("--l2-classifier", train.config.l2_includes_classifier,
                        "Apply the L2 penalty to the classifier weights too");
    train_cmd->add_flag("--classify-negatives", train.config.classify_negative_pairs,
                        "Apply the classification loss to negative pairs as well");
    train_cmd->add_option("--visual-widths", train.config.visual_widths,
                          "Hidden widths of the visual branch")
        ->delimiter(',');
    train_cmd->add_option("--audio-widths", train.config.audio_widths,
                          "Hidden widths of the audio branch")
        ->delimiter(',');
    train_cmd->add_option("--embedding-dim", train.config.embedding_dim, "Embedding dimension");
    train_cmd->add_option("--num-classes", train.num_classes_override,
                          "Class count (default: corpus header)");
    train_cmd->add_option("--seed", train.config.seed, "Training seed")
        ->envname("CROSSMODAL_SEED");
    train_cmd->add_flag("--paper-defaults", train.paper_defaults,
                        "Pin the reference hyperparameter set");

    EvalArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Recall@K tables over sampled pools");
    eval_cmd->add_option("--checkpoint", eval.checkpoint_path, "Model checkpoint")->required();
    eval_cmd->add_option("--corpus", eval.corpus_path, "Evaluation corpus")->required();
    eval_cmd->add_option("--pools", eval.pools, "Pool sizes")->delimiter(',');
    eval_cmd->add_option("--ks", eval.ks, "Recall cutoffs")->delimiter(',');
    eval_cmd->add_option("--seed", eval.seed, "Pool sampling seed")->envname("CROSSMODAL_SEED");
    eval_cmd->add_option("--out", eval.out, "Also write the table as CSV");

    QueryArgs query;
    CLI::App* query_cmd = app.add_subcommand("query", "Single cross-modal query");
    query_cmd->add_option("--checkpoint", query.checkpoint_path, "Model checkpoint")->required();
    query_cmd->add_option("--corpus", query.corpus_path, "Corpus file")->required();
    query_cmd->add_option("--id", query.id, "Query video id")->required();
    query_cmd->add_option("--direction", query.direction,
                          "audio-to-video or video-to-audio");
    query_cmd->add_option("--k", query.k, "Results to return");
    query_cmd->add_flag("--exclude-self", query.exclude_self,
                        "Drop the query's own id from the ranking");

    EmbedArgs embed;
    CLI::App* embed_cmd = app.add_subcommand("embed", "Export both embedding matrices");
    embed_cmd->add_option("--checkpoint", embed.checkpoint_path, "Model checkpoint")->required();
    embed_cmd->add_option("--corpus", embed.corpus_path, "Corpus file")->required();
    embed_cmd->add_option("--out", embed.out, "Output path")->required();
    embed_cmd->add_option("--format", embed.format, "csv or binary");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) return run_gen_data(gen);
        if (train_cmd->parsed()) return run_train(train);
        if (eval_cmd->parsed()) return run_eval(eval);
        if (query_cmd->parsed()) return run_query(query);
        if (embed_cmd->parsed()) return run_embed(embed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
