// langkit: corpus curation, tokenizer tooling and model evaluation from one
// binary. Every data-processing subcommand is a thin wrapper over the same
// stage runner the manifest mode uses, so standalone and manifest-driven runs
// of a stage produce identical outputs.

#include <CLI11.hpp>

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "langkit/error.hpp"
#include "langkit/eval.hpp"
#include "langkit/pipeline.hpp"
#include "langkit/tok.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace langkit;

namespace {

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("bad-config", "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ojson load_config(const std::string& path) {
    if (path.empty()) return ojson::object();
    ojson j;
    try {
        j = ojson::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("json-parse", path + ": " + e.what());
    }
    if (!j.is_object()) throw ValidationError("bad-config", path + " must hold a JSON object");
    return j;
}

template <typename T>
void set_if(ojson& cfg, const char* key, const std::optional<T>& value) {
    if (value) cfg[key] = *value;
}

void set_path_if(ojson& cfg, const char* key, const std::optional<std::string>& value) {
    if (value) cfg[key] = fs::absolute(*value).string();
}

// Shared state filled by whichever leaf subcommand parsed; main() executes it.
struct Cli {
    std::function<int()> action;
    int jobs = 1;
    bool no_cache = false;
    std::string config_path;

    fs::path config_base() const {
        return config_path.empty() ? fs::current_path()
                                   : fs::absolute(config_path).parent_path();
    }

    int run_stage(const std::string& stage, ojson cfg, const std::vector<std::string>& inputs,
                  const std::vector<std::string>& outputs) const {
        std::vector<fs::path> in, out;
        for (const auto& p : inputs) {
            fs::path abs = fs::absolute(p);
            if (!fs::exists(abs))
                throw ValidationError("bad-config", "input not found: " + p);
            in.push_back(abs);
        }
        for (const auto& p : outputs) out.push_back(fs::absolute(p));
        auto report =
            pipeline::run_stage(stage, cfg.dump(), in, out, config_base(), jobs, !no_cache);
        std::cout << report << "\n";
        return 0;
    }
};

// derive "<report stem>.log.jsonl" next to the report when --log is not given
std::string default_log_path(const std::string& out) {
    fs::path p(out);
    fs::path log = p.parent_path() / (p.stem().string() + ".log.jsonl");
    return log.string();
}

std::vector<std::string> gather_texts(const std::vector<std::string>& args,
                                      const std::optional<std::string>& file) {
    std::vector<std::string> texts = args;
    auto take_stream = [&texts](std::istream& in) {
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            texts.push_back(line);
        }
    };
    if (file) {
        std::ifstream in(*file, std::ios::binary);
        if (!in) throw ValidationError("bad-config", "cannot open " + *file);
        take_stream(in);
    } else if (args.empty()) {
        take_stream(std::cin);
    }
    return texts;
}

void add_corpus_knobs(CLI::App* cmd, std::optional<std::uint64_t>& max_per_shard,
                      std::optional<std::int64_t>& epoch) {
    cmd->add_option("--max-per-shard", max_per_shard, "Documents per output shard");
    cmd->add_option("--epoch", epoch, "Unix time stamped into shard manifests (default 0)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Corpus curation, subword tokenizer and LLM evaluation toolkit"};
    app.require_subcommand(1);
    Cli cli;

    // ---- corpus stages -----------------------------------------------------

    {
        auto* cmd = app.add_subcommand("ingest", "Read raw text archives into a sharded corpus");
        auto inputs = std::make_shared<std::vector<std::string>>();
        auto out = std::make_shared<std::string>();
        auto format = std::make_shared<std::optional<std::string>>();
        auto mps = std::make_shared<std::optional<std::uint64_t>>();
        auto epoch = std::make_shared<std::optional<std::int64_t>>();
        cmd->add_option("input", *inputs, "Input files (.jsonl, .wet, .wet.gz, ...)")
            ->required()
            ->expected(-1);
        cmd->add_option("--out", *out, "Output corpus directory")->required();
        cmd->add_option("--format", *format, "Input format: auto, jsonl or wet");
        cmd->add_option("--config", cli.config_path, "Stage config JSON file");
        add_corpus_knobs(cmd, *mps, *epoch);
        cmd->callback([&cli, inputs, out, format, mps, epoch] {
            cli.action = [&cli, inputs, out, format, mps, epoch] {
                ojson cfg = load_config(cli.config_path);
                set_if(cfg, "format", *format);
                set_if(cfg, "max_per_shard", *mps);
                set_if(cfg, "epoch", *epoch);
                return cli.run_stage("ingest", cfg, *inputs, {*out});
            };
        });
    }

    {
        auto* cmd = app.add_subcommand("dedup", "Drop near-duplicate documents from a corpus");
        auto input = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto seed = std::make_shared<std::optional<std::uint64_t>>();
        auto tau = std::make_shared<std::optional<double>>();
        auto mps = std::make_shared<std::optional<std::uint64_t>>();
        auto epoch = std::make_shared<std::optional<std::int64_t>>();
        cmd->add_option("corpus", *input, "Input corpus directory")->required();
        cmd->add_option("--out", *out, "Output corpus directory")->required();
        cmd->add_option("--config", cli.config_path, "Stage config JSON file");
        cmd->add_option("--seed", *seed, "Hash seed");
        cmd->add_option("--tau", *tau, "Jaccard similarity threshold");
        add_corpus_knobs(cmd, *mps, *epoch);
        cmd->callback([&cli, input, out, seed, tau, mps, epoch] {
            cli.action = [&cli, input, out, seed, tau, mps, epoch] {
                ojson cfg = load_config(cli.config_path);
                set_if(cfg, "seed", *seed);
                set_if(cfg, "tau", *tau);
                set_if(cfg, "max_per_shard", *mps);
                set_if(cfg, "epoch", *epoch);
                return cli.run_stage("dedup", cfg, {*input}, {*out});
            };
        });
    }

    {
        auto* cmd = app.add_subcommand("filter", "Apply quality filters to a corpus");
        auto input = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto mps = std::make_shared<std::optional<std::uint64_t>>();
        auto epoch = std::make_shared<std::optional<std::int64_t>>();
        cmd->add_option("corpus", *input, "Input corpus directory")->required();
        cmd->add_option("--out", *out, "Output corpus directory")->required();
        cmd->add_option("--config", cli.config_path, "Filter policy JSON file");
        add_corpus_knobs(cmd, *mps, *epoch);
        cmd->callback([&cli, input, out, mps, epoch] {
            cli.action = [&cli, input, out, mps, epoch] {
                ojson cfg = load_config(cli.config_path);
                set_if(cfg, "max_per_shard", *mps);
                set_if(cfg, "epoch", *epoch);
                return cli.run_stage("filter", cfg, {*input}, {*out});
            };
        });
    }

    {
        auto* cmd = app.add_subcommand("mix", "Interleave corpora by sampling weights");
        auto inputs = std::make_shared<std::vector<std::string>>();
        auto out = std::make_shared<std::string>();
        auto weights = std::make_shared<std::vector<double>>();
        auto seed = std::make_shared<std::optional<std::uint64_t>>();
        auto target = std::make_shared<std::optional<std::uint64_t>>();
        auto mps = std::make_shared<std::optional<std::uint64_t>>();
        auto epoch = std::make_shared<std::optional<std::int64_t>>();
        cmd->add_option("corpus", *inputs, "Input corpus directories")
            ->required()
            ->expected(-1);
        cmd->add_option("--out", *out, "Output corpus directory")->required();
        cmd->add_option("--weights", *weights, "Sampling weight per input corpus")
            ->delimiter(',');
        cmd->add_option("--seed", *seed, "Sampling seed (default 0)");
        cmd->add_option("--target-docs", *target, "Stop after this many documents");
        cmd->add_option("--config", cli.config_path, "Stage config JSON file");
        add_corpus_knobs(cmd, *mps, *epoch);
        cmd->callback([&cli, inputs, out, weights, seed, target, mps, epoch] {
            cli.action = [&cli, inputs, out, weights, seed, target, mps, epoch] {
                ojson cfg = load_config(cli.config_path);
                if (!weights->empty())
                    cfg["weights"] = *weights;
                else if (!cfg.contains("weights"))
                    cfg["weights"] = std::vector<double>(inputs->size(), 1.0);
                set_if(cfg, "seed", *seed);
                set_if(cfg, "target_docs", *target);
                set_if(cfg, "max_per_shard", *mps);
                set_if(cfg, "epoch", *epoch);
                return cli.run_stage("mix", cfg, *inputs, {*out});
            };
        });
    }

    // ---- tokenizer kit -----------------------------------------------------

    auto* tok_cmd = app.add_subcommand("tok", "Subword tokenizer tooling");
    tok_cmd->require_subcommand(1);

    {
        auto* cmd = tok_cmd->add_subcommand("train", "Train a byte-pair vocabulary on a corpus");
        auto input = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto vocab_size = std::make_shared<std::optional<std::uint64_t>>();
        auto no_fallback = std::make_shared<bool>(false);
        cmd->add_option("corpus", *input, "Training corpus directory")->required();
        cmd->add_option("--out", *out, "Output vocabulary file")->required();
        cmd->add_option("--vocab-size", *vocab_size, "Target vocabulary size");
        cmd->add_flag("--no-byte-fallback", *no_fallback,
                      "Start from observed characters instead of all 256 bytes");
        cmd->add_option("--config", cli.config_path, "Stage config JSON file");
        cmd->callback([&cli, input, out, vocab_size, no_fallback] {
            cli.action = [&cli, input, out, vocab_size, no_fallback] {
                ojson cfg = load_config(cli.config_path);
                set_if(cfg, "target_vocab_size", *vocab_size);
                if (*no_fallback) cfg["byte_fallback"] = false;
                return cli.run_stage("tok-train", cfg, {*input}, {*out});
            };
        });
    }

    {
        auto* cmd = tok_cmd->add_subcommand("merge", "Extend a base vocabulary with new tokens");
        auto base = std::make_shared<std::string>();
        auto addon = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("base", *base, "Base vocabulary file")->required();
        cmd->add_option("addon", *addon, "Vocabulary whose new tokens are appended")->required();
        cmd->add_option("--out", *out, "Output vocabulary file")->required();
        cmd->callback([&cli, base, addon, out] {
            cli.action = [&cli, base, addon, out] {
                return cli.run_stage("tok-merge", ojson::object(), {*base, *addon}, {*out});
            };
        });
    }

    {
        auto* cmd = tok_cmd->add_subcommand(
            "efficiency", "Token efficiency of one vocabulary against another on a corpus");
        auto model = std::make_shared<std::string>();
        auto reference = std::make_shared<std::string>();
        auto corpus_dir = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("model", *model, "Model vocabulary file")->required();
        cmd->add_option("reference", *reference, "Reference vocabulary file")->required();
        cmd->add_option("corpus", *corpus_dir, "Corpus directory to encode")->required();
        cmd->add_option("--out", *out, "Output report file")->required();
        cmd->callback([&cli, model, reference, corpus_dir, out] {
            cli.action = [&cli, model, reference, corpus_dir, out] {
                return cli.run_stage("tok-efficiency", ojson::object(),
                                     {*model, *reference, *corpus_dir}, {*out});
            };
        });
    }

    {
        auto* cmd = tok_cmd->add_subcommand("encode", "Encode text with a trained vocabulary");
        auto vocab_path = std::make_shared<std::string>();
        auto texts = std::make_shared<std::vector<std::string>>();
        auto file = std::make_shared<std::optional<std::string>>();
        cmd->add_option("vocab", *vocab_path, "Vocabulary file")->required();
        cmd->add_option("text", *texts, "Text to encode (default: stdin lines)");
        cmd->add_option("--file", *file, "Read input lines from this file");
        cmd->callback([&cli, vocab_path, texts, file] {
            cli.action = [vocab_path, texts, file] {
                auto vocab = tok::import_vocab(*vocab_path);
                tok::Encoder encoder(vocab);
                for (const auto& text : gather_texts(*texts, *file)) {
                    auto ids = encoder.encode(text);
                    ojson row;
                    row["ids"] = ids;
                    auto& pieces = row["pieces"] = ojson::array();
                    for (auto id : ids) pieces.push_back(vocab.tokens[id]);
                    // byte-fallback pieces can split UTF-8 sequences; print those lossily
                    std::cout << row.dump(-1, ' ', false,
                                          ojson::error_handler_t::replace)
                              << "\n";
                }
                return 0;
            };
        });
    }

    {
        auto* cmd = tok_cmd->add_subcommand("segment",
                                            "Dictionary word segmentation (longest match)");
        auto lexicon_path = std::make_shared<std::string>();
        auto texts = std::make_shared<std::vector<std::string>>();
        auto file = std::make_shared<std::optional<std::string>>();
        cmd->add_option("lexicon", *lexicon_path, "Lexicon file, one word per line")->required();
        cmd->add_option("text", *texts, "Text to segment (default: stdin lines)");
        cmd->add_option("--file", *file, "Read input lines from this file");
        cmd->callback([&cli, lexicon_path, texts, file] {
            cli.action = [lexicon_path, texts, file] {
                auto lexicon = tok::load_lexicon(*lexicon_path);
                for (const auto& text : gather_texts(*texts, *file)) {
                    auto words = tok::max_match_segment(text, lexicon);
                    for (std::size_t i = 0; i < words.size(); ++i) {
                        if (i) std::cout << ' ';
                        std::cout << words[i];
                    }
                    std::cout << "\n";
                }
                return 0;
            };
        });
    }

    // ---- evaluation --------------------------------------------------------

    auto* eval_cmd = app.add_subcommand("eval", "Model evaluation harness");
    eval_cmd->require_subcommand(1);

    {
        auto* cmd = eval_cmd->add_subcommand("exam", "Multiple-choice exam over a model API");
        auto items = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto log = std::make_shared<std::optional<std::string>>();
        auto model = std::make_shared<std::optional<std::string>>();
        auto endpoint_file = std::make_shared<std::optional<std::string>>();
        auto template_file = std::make_shared<std::optional<std::string>>();
        auto exemplars_file = std::make_shared<std::optional<std::string>>();
        auto labels = std::make_shared<std::vector<std::string>>();
        auto temperature = std::make_shared<std::optional<double>>();
        auto max_tokens = std::make_shared<std::optional<std::uint64_t>>();
        auto cache_dir = std::make_shared<std::optional<std::string>>();
        cmd->add_option("items", *items, "Exam items JSONL")->required();
        cmd->add_option("--out", *out, "Result report file")->required();
        cmd->add_option("--log", *log, "Per-item log JSONL (default: <out stem>.log.jsonl)");
        cmd->add_option("--model", *model, "Model name sent to the API");
        cmd->add_option("--endpoint-file", *endpoint_file, "Endpoint config JSON file");
        cmd->add_option("--template-file", *template_file, "Prompt template file");
        cmd->add_option("--exemplars-file", *exemplars_file, "Few-shot exemplar items JSONL");
        cmd->add_option("--labels", *labels, "Choice labels")->delimiter(',');
        cmd->add_option("--temperature", *temperature, "Sampling temperature");
        cmd->add_option("--max-tokens", *max_tokens, "Completion token limit");
        cmd->add_option("--cache-dir", *cache_dir, "Response cache directory");
        cmd->add_option("--config", cli.config_path, "Stage config JSON file");
        cmd->add_option("--jobs", cli.jobs, "Concurrent requests");
        cmd->add_flag("--no-cache", cli.no_cache, "Bypass the response cache");
        cmd->callback([&cli, items, out, log, model, endpoint_file, template_file,
                       exemplars_file, labels, temperature, max_tokens, cache_dir] {
            cli.action = [&cli, items, out, log, model, endpoint_file, template_file,
                          exemplars_file, labels, temperature, max_tokens, cache_dir] {
                ojson cfg = load_config(cli.config_path);
                set_if(cfg, "model", *model);
                set_path_if(cfg, "endpoint_file", *endpoint_file);
                set_path_if(cfg, "template_file", *template_file);
                set_path_if(cfg, "exemplars_file", *exemplars_file);
                set_path_if(cfg, "cache_dir", *cache_dir);
                if (!labels->empty()) cfg["labels"] = *labels;
                set_if(cfg, "temperature", *temperature);
                set_if(cfg, "max_tokens", *max_tokens);
                std::string log_path = log->value_or(default_log_path(*out));
                return cli.run_stage("exam-eval", cfg, {*items}, {*out, log_path});
            };
        });
    }

    {
        auto* cmd = eval_cmd->add_subcommand(
            "pairwise", "Judge-scored comparison of two models' responses");
        auto prompts = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto log = std::make_shared<std::optional<std::string>>();
        struct Side {
            std::optional<std::string> model, endpoint_file;
        };
        auto judge = std::make_shared<Side>();
        auto candidate = std::make_shared<Side>();
        auto reference = std::make_shared<Side>();
        auto judge_template = std::make_shared<std::optional<std::string>>();
        auto gen_temperature = std::make_shared<std::optional<double>>();
        auto gen_max_tokens = std::make_shared<std::optional<std::uint64_t>>();
        auto cache_dir = std::make_shared<std::optional<std::string>>();
        cmd->add_option("prompts", *prompts, "Prompt set JSONL")->required();
        cmd->add_option("--out", *out, "Result report file")->required();
        cmd->add_option("--log", *log, "Per-item log JSONL (default: <out stem>.log.jsonl)");
        cmd->add_option("--judge-model", judge->model, "Judge model name");
        cmd->add_option("--judge-endpoint-file", judge->endpoint_file,
                        "Judge endpoint config JSON file");
        cmd->add_option("--judge-template-file", *judge_template, "Judge prompt template file");
        cmd->add_option("--candidate-model", candidate->model, "Candidate model name");
        cmd->add_option("--candidate-endpoint-file", candidate->endpoint_file,
                        "Candidate endpoint config JSON file");
        cmd->add_option("--reference-model", reference->model, "Reference model name");
        cmd->add_option("--reference-endpoint-file", reference->endpoint_file,
                        "Reference endpoint config JSON file");
        cmd->add_option("--gen-temperature", *gen_temperature, "Response sampling temperature");
        cmd->add_option("--gen-max-tokens", *gen_max_tokens, "Response token limit");
        cmd->add_option("--cache-dir", *cache_dir, "Response cache directory");
        cmd->add_option("--config", cli.config_path, "Stage config JSON file");
        cmd->add_option("--jobs", cli.jobs, "Concurrent prompt evaluations");
        cmd->add_flag("--no-cache", cli.no_cache, "Bypass the response cache");
        cmd->callback([&cli, prompts, out, log, judge, candidate, reference, judge_template,
                       gen_temperature, gen_max_tokens, cache_dir] {
            cli.action = [&cli, prompts, out, log, judge, candidate, reference, judge_template,
                          gen_temperature, gen_max_tokens, cache_dir] {
                ojson cfg = load_config(cli.config_path);
                set_if(cfg, "judge_model", judge->model);
                set_path_if(cfg, "judge_endpoint_file", judge->endpoint_file);
                set_path_if(cfg, "judge_template_file", *judge_template);
                set_if(cfg, "candidate_model", candidate->model);
                set_path_if(cfg, "candidate_endpoint_file", candidate->endpoint_file);
                set_if(cfg, "reference_model", reference->model);
                set_path_if(cfg, "reference_endpoint_file", reference->endpoint_file);
                set_if(cfg, "gen_temperature", *gen_temperature);
                set_if(cfg, "gen_max_tokens", *gen_max_tokens);
                set_path_if(cfg, "cache_dir", *cache_dir);
                std::string log_path = log->value_or(default_log_path(*out));
                return cli.run_stage("judge-eval", cfg, {*prompts}, {*out, log_path});
            };
        });
    }

    {
        auto* cmd = eval_cmd->add_subcommand(
            "perplexity", "Perplexity of a sequence of token log-probabilities");
        auto file = std::make_shared<std::string>();
        auto out = std::make_shared<std::optional<std::string>>();
        cmd->add_option("logprobs", *file, "File with one log-probability per line")->required();
        cmd->add_option("--out", *out, "Also write the report to this file");
        cmd->callback([&cli, file, out] {
            cli.action = [file, out] {
                std::ifstream in(*file, std::ios::binary);
                if (!in) throw ValidationError("bad-config", "cannot open " + *file);
                std::vector<double> logprobs;
                std::string line;
                std::size_t lineno = 0;
                while (std::getline(in, line)) {
                    ++lineno;
                    if (!line.empty() && line.back() == '\r') line.pop_back();
                    if (line.empty()) continue;
                    try {
                        std::size_t used = 0;
                        double v = std::stod(line, &used);
                        while (used < line.size() && std::isspace((unsigned char)line[used]))
                            ++used;
                        if (used != line.size()) throw std::invalid_argument(line);
                        logprobs.push_back(v);
                    } catch (const std::exception&) {
                        throw ValidationError("bad-config", *file + " line " +
                                                                std::to_string(lineno) +
                                                                ": not a number: " + line);
                    }
                }
                ojson report;
                report["perplexity"] = eval::perplexity(logprobs);
                report["tokens"] = logprobs.size();
                std::cout << report.dump(2) << "\n";
                if (*out) {
                    std::ofstream os(**out, std::ios::binary | std::ios::trunc);
                    os << report.dump(2) << "\n";
                }
                return 0;
            };
        });
    }

    // ---- text metrics ------------------------------------------------------

    auto* metrics_cmd = app.add_subcommand("metrics", "Reference-based text metrics");
    metrics_cmd->require_subcommand(1);

    auto add_metric = [&](const std::string& name, const std::string& desc, bool paired) {
        auto* cmd = metrics_cmd->add_subcommand(name, desc);
        auto hyp = std::make_shared<std::string>();
        auto ref = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto smooth = std::make_shared<bool>(false);
        auto max_n = std::make_shared<std::optional<std::uint64_t>>();
        auto beta = std::make_shared<std::optional<double>>();
        auto lexicon = std::make_shared<std::optional<std::string>>();
        if (paired) {
            cmd->add_option("hypotheses", *hyp, "Hypothesis file, one segment per line")
                ->required();
            cmd->add_option("references", *ref, "Reference file, one segment per line")
                ->required();
        } else {
            cmd->add_option("items", *hyp,
                            "JSONL rows {\"prediction\": ..., \"golds\": [...]}")
                ->required();
        }
        cmd->add_option("--out", *out, "Output report file")->required();
        if (name == "bleu") {
            cmd->add_flag("--smooth", *smooth, "Add-one smoothing on higher-order n-grams");
            cmd->add_option("--max-n", *max_n, "Longest n-gram order");
        }
        if (name == "chrf") {
            cmd->add_option("--max-n", *max_n, "Longest character n-gram order");
            cmd->add_option("--beta", *beta, "Recall weight");
        }
        if (name == "rouge" || name == "qaf1")
            cmd->add_option("--lexicon", *lexicon,
                            "Word lexicon for dictionary segmentation (default: whitespace)");
        cmd->callback([&cli, name, paired, hyp, ref, out, smooth, max_n, beta, lexicon] {
            cli.action = [&cli, name, paired, hyp, ref, out, smooth, max_n, beta, lexicon] {
                ojson cfg;
                cfg["metric"] = name;
                if (*smooth) cfg["smooth"] = true;
                set_if(cfg, "max_n", *max_n);
                set_if(cfg, "beta", *beta);
                set_path_if(cfg, "lexicon", *lexicon);
                std::vector<std::string> inputs = {*hyp};
                if (paired) inputs.push_back(*ref);
                return cli.run_stage("metrics", cfg, inputs, {*out});
            };
        });
    };
    add_metric("bleu", "Corpus-level n-gram precision with brevity penalty", true);
    add_metric("chrf", "Character n-gram F-score, averaged over lines", true);
    add_metric("rouge", "Unigram, bigram and LCS overlap F-scores", true);
    add_metric("qaf1", "Token-overlap F1 of answers against gold sets", false);

    // ---- manifest runner ---------------------------------------------------

    {
        auto* cmd = app.add_subcommand("run", "Execute a pipeline manifest stage by stage");
        auto manifest_path = std::make_shared<std::string>();
        auto resume = std::make_shared<bool>(false);
        cmd->add_option("manifest", *manifest_path, "Pipeline manifest JSON")->required();
        cmd->add_flag("--resume", *resume, "Skip stages whose inputs and config are unchanged");
        cmd->add_option("--jobs", cli.jobs, "Intra-stage parallelism");
        cmd->add_flag("--no-cache", cli.no_cache, "Bypass model response caches");
        cmd->callback([&cli, manifest_path, resume] {
            cli.action = [&cli, manifest_path, resume] {
                auto manifest = pipeline::load_pipeline_manifest(*manifest_path);
                auto result =
                    pipeline::run_manifest(manifest, *resume, cli.jobs, !cli.no_cache);
                std::size_t n = result.reports.size();
                for (std::size_t i = 0; i < n; ++i) {
                    const auto& r = result.reports[i];
                    std::cout << "[" << (i + 1) << "/" << n << "] " << r.name;
                    if (r.skipped)
                        std::cout << "  skipped (up to date)";
                    else
                        std::cout << "  done in " << r.seconds << "s";
                    std::cout << "\n";
                }
                std::cout << "pipeline ok: " << n << " stage(s), workspace "
                          << manifest.workspace.string() << "\n";
                return 0;
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return cli.action ? cli.action() : 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
