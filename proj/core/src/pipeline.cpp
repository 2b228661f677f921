#include "langkit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <utility>

#include "jsonio.hpp"
#include "langkit/client.hpp"
#include "langkit/corpus.hpp"
#include "langkit/curate.hpp"
#include "langkit/dedup.hpp"
#include "langkit/error.hpp"
#include "langkit/eval.hpp"
#include "langkit/hash.hpp"
#include "langkit/metrics.hpp"
#include "langkit/tok.hpp"

namespace langkit::pipeline {

namespace fs = std::filesystem;
using jsonio::ojson;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io-open", "cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return text;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("io-write", "cannot write " + tmp.string());
        out << text;
        if (!out) throw Error("io-write", "short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

fs::path resolve_cfg_path(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

// --- config accessors -------------------------------------------------------

std::uint64_t cfg_u64(const ojson& j, const char* key, std::uint64_t fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
        throw ValidationError("bad-config", std::string(key) + " must be a nonnegative integer");
    return it->get<std::uint64_t>();
}

double cfg_double(const ojson& j, const char* key, double fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    if (!it->is_number())
        throw ValidationError("bad-config", std::string(key) + " must be a number");
    return it->get<double>();
}

bool cfg_bool(const ojson& j, const char* key, bool fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    if (!it->is_boolean())
        throw ValidationError("bad-config", std::string(key) + " must be a boolean");
    return it->get<bool>();
}

std::string cfg_str(const ojson& j, const char* key, const std::string& fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    if (!it->is_string())
        throw ValidationError("bad-config", std::string(key) + " must be a string");
    return it->get<std::string>();
}

// Shard-writing stages share these two keys; module configs get the rest.
struct ShardKnobs {
    std::uint64_t max_per_shard = 100000;
    std::int64_t epoch = 0;  // pinned for reproducible created_at stamps
};

ShardKnobs take_shard_knobs(ojson& cfg) {
    ShardKnobs knobs;
    knobs.max_per_shard = cfg_u64(cfg, "max_per_shard", knobs.max_per_shard);
    if (knobs.max_per_shard == 0)
        throw ValidationError("bad-config", "max_per_shard must be positive");
    auto it = cfg.find("epoch");
    if (it != cfg.end() && !it->is_null()) {
        if (!it->is_number_integer())
            throw ValidationError("bad-config", "epoch must be an integer");
        knobs.epoch = it->get<std::int64_t>();
    }
    cfg.erase("max_per_shard");
    cfg.erase("epoch");
    return knobs;
}

fs::path corpus_manifest(const fs::path& dir) { return dir / "manifest.json"; }

// --- stage implementations --------------------------------------------------

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string ingest_format_for(const std::string& fmt, const fs::path& input) {
    if (fmt != "auto") return fmt;
    std::string name = input.filename().string();
    for (const char* wet : {".wet", ".wet.gz", ".warc", ".warc.gz"})
        if (has_suffix(name, wet)) return "wet";
    for (const char* jl : {".jsonl", ".ndjson", ".json", ".jsonl.gz"})
        if (has_suffix(name, jl)) return "jsonl";
    throw ValidationError("bad-config",
                          "cannot infer ingest format of " + name + "; set \"format\"");
}

ojson stage_ingest(ojson cfg, const std::vector<fs::path>& in, const std::vector<fs::path>& out) {
    auto knobs = take_shard_knobs(cfg);
    std::string fmt = cfg_str(cfg, "format", "auto");
    if (fmt != "auto" && fmt != "jsonl" && fmt != "wet")
        throw ValidationError("bad-config", "format must be auto, jsonl or wet");
    corpus::JsonlFieldMap map;
    if (auto it = cfg.find("fields"); it != cfg.end()) {
        if (!it->is_object()) throw ValidationError("bad-config", "fields must be an object");
        map.text = cfg_str(*it, "text", map.text);
        map.id = cfg_str(*it, "id", map.id);
        map.url = cfg_str(*it, "url", map.url);
        map.lang = cfg_str(*it, "lang", map.lang);
    }

    corpus::ShardWriter writer(out[0], knobs.max_per_shard, knobs.epoch);
    corpus::IngestStats total;
    auto sink = [&writer](corpus::Document&& doc) { writer.add(doc); };
    for (const auto& input : in) {
        auto stats = ingest_format_for(fmt, input) == "wet"
                         ? corpus::ingest_wet(input, sink)
                         : corpus::ingest_jsonl(input, map, sink);
        total.docs += stats.docs;
        total.skipped += stats.skipped;
        total.errors += stats.errors;
    }
    auto manifest = writer.finish();

    ojson report;
    report["docs"] = total.docs;
    report["skipped"] = total.skipped;
    report["errors"] = total.errors;
    report["shards"] = manifest.shards.size();
    return report;
}

ojson stage_dedup(ojson cfg, const std::vector<fs::path>& in, const std::vector<fs::path>& out) {
    auto knobs = take_shard_knobs(cfg);
    auto dcfg = dedup::dedup_config_from_json(cfg.dump());
    auto [manifest, report] =
        dedup::deduplicate(corpus_manifest(in[0]), dcfg, out[0], knobs.max_per_shard, knobs.epoch);
    (void)manifest;
    return ojson::parse(dedup::report_to_json(report));
}

ojson stage_filter(ojson cfg, const std::vector<fs::path>& in, const std::vector<fs::path>& out) {
    auto knobs = take_shard_knobs(cfg);
    auto policy = curate::filter_policy_from_json(cfg.dump());
    auto [manifest, stats] = curate::filter_corpus(corpus_manifest(in[0]), policy, out[0],
                                                   knobs.max_per_shard, knobs.epoch);
    (void)manifest;
    return ojson::parse(curate::filter_stats_to_json(stats));
}

curate::MixSpec mix_spec_from_stage(const ojson& cfg, const std::vector<fs::path>& in) {
    auto wit = cfg.find("weights");
    if (wit == cfg.end() || !wit->is_array())
        throw ValidationError("bad-config", "mix needs a \"weights\" array");
    if (wit->size() != in.size())
        throw ValidationError("bad-config",
                              "mix has " + std::to_string(in.size()) + " inputs but " +
                                  std::to_string(wit->size()) + " weights");
    curate::MixSpec spec;
    double sum = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const auto& w = (*wit)[i];
        if (!w.is_number() || w.get<double>() < 0.0)
            throw ValidationError("bad-config", "weights must be nonnegative numbers");
        spec.sources.push_back({corpus_manifest(in[i]), w.get<double>()});
        sum += w.get<double>();
    }
    if (sum <= 0.0) throw ValidationError("bad-config", "weights must not all be zero");
    spec.seed = cfg_u64(cfg, "seed", 0);
    if (auto it = cfg.find("target_docs"); it != cfg.end() && !it->is_null())
        spec.target_docs = cfg_u64(cfg, "target_docs", 0);
    return spec;
}

ojson stage_mix(ojson cfg, const std::vector<fs::path>& in, const std::vector<fs::path>& out) {
    auto knobs = take_shard_knobs(cfg);
    auto spec = mix_spec_from_stage(cfg, in);
    auto [manifest, report] = curate::mix_corpora(spec, out[0], knobs.max_per_shard, knobs.epoch);
    (void)manifest;
    return ojson::parse(curate::mix_report_to_json(report));
}

ojson stage_tok_train(ojson cfg, const std::vector<fs::path>& in,
                      const std::vector<fs::path>& out) {
    auto target = cfg_u64(cfg, "target_vocab_size", 0);
    if (target == 0)
        throw ValidationError("bad-config", "tok-train needs a positive target_vocab_size");
    bool byte_fallback = cfg_bool(cfg, "byte_fallback", true);
    auto vocab = tok::train_bpe_manifest(corpus_manifest(in[0]).string(), target, byte_fallback);
    tok::export_vocab(vocab, out[0].string());
    ojson report;
    report["tokens"] = vocab.size();
    report["merges"] = vocab.merges.size();
    report["byte_fallback"] = vocab.byte_fallback;
    return report;
}

ojson stage_tok_merge(const std::vector<fs::path>& in, const std::vector<fs::path>& out) {
    auto base = tok::import_vocab(in[0].string());
    auto addon = tok::import_vocab(in[1].string());
    auto merged = tok::merge_vocabs(base, addon);
    tok::export_vocab(merged, out[0].string());
    ojson report;
    report["base_tokens"] = base.size();
    report["addon_tokens"] = addon.size();
    report["merged_tokens"] = merged.size();
    return report;
}

ojson stage_tok_efficiency(const std::vector<fs::path>& in, const std::vector<fs::path>& out) {
    auto model = tok::import_vocab(in[0].string());
    auto reference = tok::import_vocab(in[1].string());
    auto report =
        tok::token_efficiency_manifest(model, reference, corpus_manifest(in[2]).string());
    auto text = tok::efficiency_report_to_json(report);
    write_text(out[0], text + "\n");
    return ojson::parse(text);
}

// --- model-backed stages ----------------------------------------------------

client::EndpointConfig endpoint_from_cfg(const ojson& cfg, const std::string& prefix,
                                         const fs::path& config_base, bool required) {
    std::string obj_key = prefix.empty() ? "endpoint" : prefix + "_endpoint";
    std::string file_key = obj_key + "_file";
    auto obj = cfg.find(obj_key);
    auto file = cfg.find(file_key);
    if (obj != cfg.end() && file != cfg.end())
        throw ValidationError("bad-config", "give " + obj_key + " or " + file_key + ", not both");
    if (obj != cfg.end()) {
        if (!obj->is_object()) throw ValidationError("bad-config", obj_key + " must be an object");
        return client::endpoint_config_from_json(obj->dump());
    }
    if (file != cfg.end())
        return client::load_endpoint_config(
            resolve_cfg_path(config_base, file->get<std::string>()).string());
    if (required)
        throw ValidationError("bad-config", "missing " + obj_key + " (or " + file_key + ")");
    return {};
}

bool has_endpoint(const ojson& cfg, const std::string& prefix) {
    return cfg.contains(prefix + "_endpoint") || cfg.contains(prefix + "_endpoint_file");
}

client::ClientOptions client_options(const ojson& cfg, const fs::path& config_base,
                                     bool use_cache) {
    client::ClientOptions opts;
    opts.cache_dir = resolve_cfg_path(config_base, cfg_str(cfg, "cache_dir", ".langkit-cache"))
                         .string();
    opts.use_cache = use_cache;
    return opts;
}

ojson stage_exam_eval(const ojson& cfg, const std::vector<fs::path>& in,
                      const std::vector<fs::path>& out, const fs::path& config_base, int jobs,
                      bool use_cache) {
    eval::ExamConfig config;
    config.model = cfg_str(cfg, "model", "");
    if (config.model.empty()) throw ValidationError("bad-config", "exam-eval needs a model");
    if (auto it = cfg.find("labels"); it != cfg.end()) {
        if (!it->is_array() || it->empty())
            throw ValidationError("bad-config", "labels must be a non-empty array");
        config.labels.clear();
        for (const auto& l : *it) config.labels.push_back(l.get<std::string>());
    }
    if (auto tmpl = cfg_str(cfg, "template_file", ""); !tmpl.empty())
        config.template_text = read_text(resolve_cfg_path(config_base, tmpl));
    if (auto shots = cfg_str(cfg, "exemplars_file", ""); !shots.empty())
        config.exemplars = eval::load_exam_items(resolve_cfg_path(config_base, shots).string());
    config.temperature = cfg_double(cfg, "temperature", 0.0);
    config.max_tokens = int(cfg_u64(cfg, "max_tokens", 32));
    config.jobs = int(cfg_u64(cfg, "jobs", std::uint64_t(std::max(jobs, 1))));

    auto endpoint = endpoint_from_cfg(cfg, "", config_base, true);
    client::HttpChatClient model(endpoint, client_options(cfg, config_base, use_cache));
    auto items = eval::load_exam_items(in[0].string());
    auto result = eval::run_exam(items, model, config);
    write_text(out[0], eval::exam_result_json(result) + "\n");
    write_text(out[1], eval::exam_item_log_jsonl(result));
    return ojson::parse(eval::exam_result_json(result));
}

ojson stage_judge_eval(const ojson& cfg, const std::vector<fs::path>& in,
                       const std::vector<fs::path>& out, const fs::path& config_base, int jobs,
                       bool use_cache) {
    eval::PairwiseConfig config;
    config.judge.model = cfg_str(cfg, "judge_model", "");
    if (config.judge.model.empty())
        throw ValidationError("bad-config", "judge-eval needs a judge_model");
    auto tmpl = cfg_str(cfg, "judge_template_file", "");
    if (tmpl.empty())
        throw ValidationError("bad-config", "judge-eval needs a judge_template_file");
    config.judge.tmpl = eval::load_judge_template(resolve_cfg_path(config_base, tmpl).string());
    config.judge.temperature = cfg_double(cfg, "judge_temperature", 0.0);
    config.judge.max_tokens = int(cfg_u64(cfg, "judge_max_tokens", 16));
    config.gen_temperature = cfg_double(cfg, "gen_temperature", 0.0);
    config.gen_max_tokens = int(cfg_u64(cfg, "gen_max_tokens", 512));
    config.jobs = int(cfg_u64(cfg, "jobs", std::uint64_t(std::max(jobs, 1))));

    auto opts = client_options(cfg, config_base, use_cache);
    client::HttpChatClient judge(endpoint_from_cfg(cfg, "judge", config_base, true), opts);

    std::unique_ptr<client::HttpChatClient> candidate, reference;
    if (has_endpoint(cfg, "candidate")) {
        config.candidate_model = cfg_str(cfg, "candidate_model", "");
        if (config.candidate_model.empty())
            throw ValidationError("bad-config", "candidate endpoint set without candidate_model");
        candidate = std::make_unique<client::HttpChatClient>(
            endpoint_from_cfg(cfg, "candidate", config_base, true), opts);
    }
    if (has_endpoint(cfg, "reference")) {
        config.reference_model = cfg_str(cfg, "reference_model", "");
        if (config.reference_model.empty())
            throw ValidationError("bad-config", "reference endpoint set without reference_model");
        reference = std::make_unique<client::HttpChatClient>(
            endpoint_from_cfg(cfg, "reference", config_base, true), opts);
    }

    auto prompts = eval::load_pairwise_prompts(in[0].string());
    auto result =
        eval::run_pairwise_eval(prompts, candidate.get(), reference.get(), judge, config);
    write_text(out[0], eval::pairwise_result_json(result) + "\n");
    write_text(out[1], eval::pairwise_log_jsonl(result));
    return ojson::parse(eval::pairwise_result_json(result));
}

// --- text-metric stages -----------------------------------------------------

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io-open", "cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

tok::Segmenter segmenter_from_cfg(const ojson& cfg, const fs::path& config_base) {
    auto lex_path = cfg_str(cfg, "lexicon", "");
    if (lex_path.empty())
        return [](std::string_view text) { return tok::whitespace_segment(text); };
    auto lex = std::make_shared<tok::Lexicon>(
        tok::load_lexicon(resolve_cfg_path(config_base, lex_path).string()));
    return [lex](std::string_view text) { return tok::max_match_segment(text, *lex); };
}

ojson stage_metrics(const ojson& cfg, const std::vector<fs::path>& in,
                    const std::vector<fs::path>& out, const fs::path& config_base) {
    std::string metric = cfg_str(cfg, "metric", "");
    ojson report;
    report["metric"] = metric;
    if (metric == "bleu") {
        auto hyp_lines = read_lines(in[0]);
        auto ref_lines = read_lines(in[1]);
        std::vector<std::vector<std::string>> hyps, refs;
        for (const auto& l : hyp_lines) hyps.push_back(tok::whitespace_segment(l));
        for (const auto& l : ref_lines) refs.push_back(tok::whitespace_segment(l));
        auto score = metrics::bleu(hyps, refs, cfg_bool(cfg, "smooth", false),
                                   int(cfg_u64(cfg, "max_n", 4)));
        report["bleu"] = score.value;
        report["brevity_penalty"] = score.brevity_penalty;
        report["precisions"] = score.precisions;
        report["hyp_len"] = score.hyp_len;
        report["ref_len"] = score.ref_len;
        report["segments"] = hyp_lines.size();
    } else if (metric == "chrf") {
        auto hyp_lines = read_lines(in[0]);
        auto ref_lines = read_lines(in[1]);
        if (hyp_lines.size() != ref_lines.size())
            throw ValidationError("length-mismatch",
                                  std::to_string(hyp_lines.size()) + " hypotheses vs " +
                                      std::to_string(ref_lines.size()) + " references");
        int max_n = int(cfg_u64(cfg, "max_n", 6));
        double beta = cfg_double(cfg, "beta", 2.0);
        std::vector<double> per_line;
        double sum = 0.0;
        for (std::size_t i = 0; i < hyp_lines.size(); ++i) {
            auto score = metrics::chrf(hyp_lines[i], ref_lines[i], max_n, beta);
            per_line.push_back(score.value);
            sum += score.value;
        }
        report["mean"] = per_line.empty() ? 0.0 : sum / double(per_line.size());
        report["count"] = per_line.size();
        report["per_line"] = per_line;
    } else if (metric == "rouge") {
        auto hyp_lines = read_lines(in[0]);
        auto ref_lines = read_lines(in[1]);
        if (hyp_lines.size() != ref_lines.size())
            throw ValidationError("length-mismatch",
                                  std::to_string(hyp_lines.size()) + " hypotheses vs " +
                                      std::to_string(ref_lines.size()) + " references");
        auto segmenter = segmenter_from_cfg(cfg, config_base);
        double s1 = 0, s2 = 0, sl = 0;
        ojson per_line = ojson::array();
        for (std::size_t i = 0; i < hyp_lines.size(); ++i) {
            auto score = metrics::rouge(hyp_lines[i], ref_lines[i], segmenter);
            s1 += score.r1.f1;
            s2 += score.r2.f1;
            sl += score.rl.f1;
            ojson row;
            row["rouge1_f1"] = score.r1.f1;
            row["rouge2_f1"] = score.r2.f1;
            row["rougeL_f1"] = score.rl.f1;
            per_line.push_back(row);
        }
        double n = double(std::max<std::size_t>(hyp_lines.size(), 1));
        report["rouge1_f1"] = s1 / n;
        report["rouge2_f1"] = s2 / n;
        report["rougeL_f1"] = sl / n;
        report["count"] = hyp_lines.size();
        report["per_line"] = per_line;
    } else if (metric == "qaf1") {
        auto segmenter = segmenter_from_cfg(cfg, config_base);
        auto lines = read_lines(in[0]);
        double sum = 0.0;
        std::size_t count = 0;
        ojson per_line = ojson::array();
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto j = jsonio::parse(lines[i], in[0].string() + " line " + std::to_string(i + 1));
            std::string prediction = jsonio::get_str(j, "prediction");
            auto git = j.find("golds");
            if (git == j.end() || !git->is_array() || git->empty())
                throw ValidationError("bad-item", in[0].string() + " line " +
                                                      std::to_string(i + 1) +
                                                      ": \"golds\" must be a non-empty array");
            std::vector<std::string> golds;
            for (const auto& g : *git) golds.push_back(g.get<std::string>());
            auto score = metrics::qa_f1(prediction, golds, segmenter);
            sum += score.value;
            ++count;
            ojson row;
            row["f1"] = score.value;
            row["precision"] = score.best.precision;
            row["recall"] = score.best.recall;
            row["best_gold"] = score.best_gold;
            per_line.push_back(row);
        }
        if (count == 0) throw ValidationError("empty-dataset", in[0].string() + " has no rows");
        report["mean_f1"] = sum / double(count);
        report["count"] = count;
        report["per_line"] = per_line;
    } else {
        throw ValidationError("bad-config", "metric must be bleu, chrf, rouge or qaf1");
    }
    write_text(out[0], report.dump(2) + "\n");
    return report;
}

// --- arity and dispatch -----------------------------------------------------

struct Arity {
    std::size_t min_in, max_in, outs;
};

Arity arity_of(const std::string& name, const ojson& cfg) {
    if (name == "ingest") return {1, SIZE_MAX, 1};
    if (name == "dedup" || name == "filter" || name == "tok-train") return {1, 1, 1};
    if (name == "mix") return {2, SIZE_MAX, 1};
    if (name == "tok-merge") return {2, 2, 1};
    if (name == "tok-efficiency") return {3, 3, 1};
    if (name == "exam-eval" || name == "judge-eval") return {1, 1, 2};
    if (name == "metrics") {
        std::string metric = cfg_str(cfg, "metric", "");
        return {metric == "qaf1" ? std::size_t(1) : std::size_t(2),
                metric == "qaf1" ? std::size_t(1) : std::size_t(2), 1};
    }
    throw ValidationError("bad-config", "unknown stage \"" + name + "\"");
}

ojson parse_stage_config(const std::string& config_json) {
    auto cfg = config_json.empty() ? ojson::object()
                                   : jsonio::parse(config_json, "stage config");
    if (!cfg.is_object()) throw ValidationError("bad-config", "stage config must be an object");
    return cfg;
}

// Side-effect-free checks shared by validate_manifest and run_stage.
void check_stage(const std::string& name, const ojson& cfg, std::size_t n_in,
                 std::size_t n_out) {
    auto arity = arity_of(name, cfg);
    if (n_in < arity.min_in || n_in > arity.max_in)
        throw ValidationError(
            "bad-config",
            name + " takes " +
                (arity.min_in == arity.max_in
                     ? std::to_string(arity.min_in)
                     : "at least " + std::to_string(arity.min_in)) +
                " input(s), got " + std::to_string(n_in));
    if (n_out != arity.outs)
        throw ValidationError("bad-config", name + " writes " + std::to_string(arity.outs) +
                                                " output(s), got " + std::to_string(n_out));

    // cheap config sanity, no filesystem or network touched
    ojson copy = cfg;
    if (name == "ingest") {
        auto knobs = take_shard_knobs(copy);
        (void)knobs;
        std::string fmt = cfg_str(copy, "format", "auto");
        if (fmt != "auto" && fmt != "jsonl" && fmt != "wet")
            throw ValidationError("bad-config", "format must be auto, jsonl or wet");
    } else if (name == "dedup") {
        take_shard_knobs(copy);
        dedup::dedup_config_from_json(copy.dump());
    } else if (name == "filter") {
        take_shard_knobs(copy);
        curate::filter_policy_from_json(copy.dump());
    } else if (name == "mix") {
        take_shard_knobs(copy);
        std::vector<fs::path> dummy(n_in);
        mix_spec_from_stage(copy, dummy);
    } else if (name == "tok-train") {
        if (cfg_u64(copy, "target_vocab_size", 0) == 0)
            throw ValidationError("bad-config", "tok-train needs a positive target_vocab_size");
    } else if (name == "exam-eval") {
        if (cfg_str(copy, "model", "").empty())
            throw ValidationError("bad-config", "exam-eval needs a model");
        if (!copy.contains("endpoint") && !copy.contains("endpoint_file"))
            throw ValidationError("bad-config", "missing endpoint (or endpoint_file)");
    } else if (name == "judge-eval") {
        if (cfg_str(copy, "judge_model", "").empty())
            throw ValidationError("bad-config", "judge-eval needs a judge_model");
        if (cfg_str(copy, "judge_template_file", "").empty())
            throw ValidationError("bad-config", "judge-eval needs a judge_template_file");
        if (!has_endpoint(copy, "judge"))
            throw ValidationError("bad-config", "missing judge_endpoint (or judge_endpoint_file)");
    } else if (name == "metrics") {
        std::string metric = cfg_str(copy, "metric", "");
        if (metric != "bleu" && metric != "chrf" && metric != "rouge" && metric != "qaf1")
            throw ValidationError("bad-config", "metric must be bleu, chrf, rouge or qaf1");
    }
}

}  // namespace

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {
        "ingest",         "dedup",     "filter",     "mix",        "tok-train",
        "tok-merge",      "tok-efficiency", "exam-eval", "judge-eval", "metrics"};
    return names;
}

bool is_stage_name(const std::string& name) {
    const auto& names = stage_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

std::string run_stage(const std::string& name, const std::string& config_json,
                      const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                      const fs::path& config_base, int jobs, bool use_cache) {
    if (!is_stage_name(name))
        throw ValidationError("bad-config", "unknown stage \"" + name + "\"");
    auto cfg = parse_stage_config(config_json);
    check_stage(name, cfg, inputs.size(), outputs.size());
    for (const auto& out : outputs)
        if (out.has_parent_path()) fs::create_directories(out.parent_path());

    ojson report;
    if (name == "ingest")
        report = stage_ingest(cfg, inputs, outputs);
    else if (name == "dedup")
        report = stage_dedup(cfg, inputs, outputs);
    else if (name == "filter")
        report = stage_filter(cfg, inputs, outputs);
    else if (name == "mix")
        report = stage_mix(cfg, inputs, outputs);
    else if (name == "tok-train")
        report = stage_tok_train(cfg, inputs, outputs);
    else if (name == "tok-merge")
        report = stage_tok_merge(inputs, outputs);
    else if (name == "tok-efficiency")
        report = stage_tok_efficiency(inputs, outputs);
    else if (name == "exam-eval")
        report = stage_exam_eval(cfg, inputs, outputs, config_base, jobs, use_cache);
    else if (name == "judge-eval")
        report = stage_judge_eval(cfg, inputs, outputs, config_base, jobs, use_cache);
    else
        report = stage_metrics(cfg, inputs, outputs, config_base);
    return report.dump(2);
}

// ---------------------------------------------------------------------------
// Manifest handling

PipelineManifest load_pipeline_manifest(const fs::path& path) {
    if (!fs::is_regular_file(path))
        throw ValidationError("bad-config", "manifest not found: " + path.string());
    auto j = jsonio::parse(read_text(path), "manifest " + path.string());
    if (!j.is_object())
        throw ValidationError("bad-config", "manifest must be a JSON object");
    PipelineManifest m;
    m.base_dir = fs::absolute(path).parent_path();
    std::string ws = jsonio::get_str(j, "workspace");
    if (ws.empty())
        throw ValidationError("bad-config", "manifest needs a \"workspace\" directory");
    fs::path wsp(ws);
    m.workspace = wsp.is_absolute() ? wsp : m.base_dir / wsp;
    auto stages = j.find("stages");
    if (stages == j.end() || !stages->is_array())
        throw ValidationError("bad-config", "manifest needs a \"stages\" array");
    for (const auto& s : *stages) {
        if (!s.is_object())
            throw ValidationError("bad-config", "each stage must be a JSON object");
        StageSpec spec;
        spec.name = jsonio::get_str(s, "name");
        auto cit = s.find("config");
        if (cit != s.end()) {
            if (!cit->is_object())
                throw ValidationError("bad-config",
                                      "stage \"" + spec.name + "\": config must be an object");
            spec.config_json = cit->dump();
        } else {
            spec.config_json = "{}";
        }
        for (const char* key : {"inputs", "outputs"}) {
            auto it = s.find(key);
            if (it == s.end()) continue;
            if (!it->is_array())
                throw ValidationError("bad-config", "stage \"" + spec.name + "\": " + key +
                                                        " must be an array of strings");
            for (const auto& v : *it) {
                if (!v.is_string())
                    throw ValidationError("bad-config", "stage \"" + spec.name + "\": " + key +
                                                            " must be an array of strings");
                (std::string(key) == "inputs" ? spec.inputs : spec.outputs)
                    .push_back(v.get<std::string>());
            }
        }
        m.stages.push_back(std::move(spec));
    }
    return m;
}

namespace {

bool escapes_workspace(const std::string& ref) {
    fs::path p(ref);
    if (p.is_absolute()) return true;
    fs::path norm = p.lexically_normal();
    return norm.empty() || norm.begin()->string() == "..";
}

// output ref -> producing stage index
std::map<std::string, std::size_t> output_map(const PipelineManifest& m) {
    std::map<std::string, std::size_t> outputs;
    for (std::size_t i = 0; i < m.stages.size(); ++i)
        for (const auto& out : m.stages[i].outputs)
            outputs.emplace(out, i);
    return outputs;
}

std::string stage_label(const PipelineManifest& m, std::size_t i) {
    return "stage " + std::to_string(i + 1) + " (" + m.stages[i].name + ")";
}

fs::path resolve_input(const PipelineManifest& m,
                       const std::map<std::string, std::size_t>& outputs,
                       const std::string& ref) {
    if (outputs.count(ref)) return m.workspace / ref;
    fs::path p(ref);
    return p.is_absolute() ? p : m.base_dir / p;
}

}  // namespace

void validate_manifest(const PipelineManifest& m) {
    if (m.workspace.empty())
        throw ValidationError("bad-config", "manifest needs a \"workspace\" directory");
    if (m.stages.empty()) throw ValidationError("bad-config", "manifest has no stages");

    std::map<std::string, std::size_t> outputs;
    for (std::size_t i = 0; i < m.stages.size(); ++i) {
        const auto& stage = m.stages[i];
        if (!is_stage_name(stage.name))
            throw ValidationError("bad-config", "stage " + std::to_string(i + 1) +
                                                    ": unknown stage \"" + stage.name + "\"");
        for (const auto& out : stage.outputs) {
            if (escapes_workspace(out))
                throw ValidationError("bad-config",
                                      stage_label(m, i) + ": output \"" + out +
                                          "\" must stay inside the workspace");
            auto [it, fresh] = outputs.emplace(out, i);
            if (!fresh)
                throw ValidationError("bad-config",
                                      stage_label(m, i) + ": output \"" + out +
                                          "\" is already written by " +
                                          stage_label(m, it->second));
        }
    }

    for (std::size_t i = 0; i < m.stages.size(); ++i) {
        const auto& stage = m.stages[i];
        try {
            check_stage(stage.name, parse_stage_config(stage.config_json), stage.inputs.size(),
                        stage.outputs.size());
        } catch (const Error& e) {
            throw ValidationError("bad-config", stage_label(m, i) + ": " + e.what());
        }
        for (const auto& ref : stage.inputs) {
            auto it = outputs.find(ref);
            if (it != outputs.end()) {
                if (it->second == i)
                    throw ValidationError("bad-config", "cycle: " + stage_label(m, i) +
                                                            " consumes its own output \"" + ref +
                                                            "\"");
                if (it->second > i)
                    throw ValidationError(
                        "bad-config", "cycle: input \"" + ref + "\" of " + stage_label(m, i) +
                                          " is produced by " + stage_label(m, it->second) +
                                          ", which runs later");
                continue;
            }
            auto resolved = resolve_input(m, outputs, ref);
            if (!fs::exists(resolved))
                throw ValidationError("bad-config",
                                      stage_label(m, i) + ": input \"" + ref +
                                          "\" is neither a prior stage output nor an existing "
                                          "path (" +
                                          resolved.string() + ")");
        }
    }
}

std::string digest_path(const fs::path& path) {
    if (fs::is_regular_file(path)) return hash::sha256_hex(read_text(path));
    if (fs::is_directory(path)) {
        std::vector<std::pair<std::string, fs::path>> files;
        for (const auto& entry : fs::recursive_directory_iterator(path))
            if (entry.is_regular_file())
                files.emplace_back(fs::relative(entry.path(), path).generic_string(),
                                   entry.path());
        std::sort(files.begin(), files.end());
        std::string acc;
        for (const auto& [rel, p] : files) {
            acc += rel;
            acc += '\0';
            acc += hash::sha256_hex(read_text(p));
            acc += '\n';
        }
        return hash::sha256_hex(acc);
    }
    throw Error("io-open", "cannot digest " + path.string());
}

namespace {

std::string stage_digest(const StageSpec& stage, const std::vector<fs::path>& inputs) {
    std::string acc = "stage:";
    acc += stage.name;
    acc += '\n';
    acc += "config:";
    acc += stage.config_json;
    acc += '\n';
    for (std::size_t k = 0; k < stage.inputs.size(); ++k) {
        acc += "input:";
        acc += stage.inputs[k];
        acc += ':';
        acc += digest_path(inputs[k]);
        acc += '\n';
    }
    for (const auto& out : stage.outputs) {
        acc += "output:";
        acc += out;
        acc += '\n';
    }
    return hash::sha256_hex(acc);
}

// error messages can quote raw input bytes, so dump lossily
std::string safe_dump(const ojson& j, int indent = -1) {
    return j.dump(indent, ' ', false, ojson::error_handler_t::replace);
}

void append_log(const fs::path& log_path, const ojson& event) {
    std::ofstream out(log_path, std::ios::binary | std::ios::app);
    out << safe_dump(event) << '\n';
}

}  // namespace

RunResult run_manifest(const PipelineManifest& m, bool resume, int jobs, bool use_cache) {
    validate_manifest(m);
    fs::path meta = m.workspace / ".pipeline";
    fs::create_directories(meta);
    fs::path log_path = meta / "run.log.jsonl";
    auto outputs = output_map(m);

    RunResult result;
    for (std::size_t i = 0; i < m.stages.size(); ++i) {
        const auto& stage = m.stages[i];
        std::vector<fs::path> in_paths, out_paths;
        for (const auto& ref : stage.inputs) in_paths.push_back(resolve_input(m, outputs, ref));
        for (const auto& ref : stage.outputs) out_paths.push_back(m.workspace / ref);

        char tag[16];
        std::snprintf(tag, sizeof tag, "%02zu-", i + 1);
        fs::path marker = meta / (tag + stage.name + ".done");
        fs::path report_path = meta / (tag + stage.name + ".report.json");

        std::string digest = stage_digest(stage, in_paths);
        StageReport report;
        report.name = stage.name;

        if (resume && fs::exists(marker)) {
            bool fresh = false;
            try {
                auto done = jsonio::load_file(marker);
                fresh = jsonio::get_str(done, "digest") == digest;
            } catch (const Error&) {
                fresh = false;
            }
            for (const auto& out : out_paths)
                if (!fs::exists(out)) fresh = false;
            if (fresh) {
                report.skipped = true;
                if (fs::exists(report_path)) report.report_json = read_text(report_path);
                ojson event;
                event["event"] = "stage-skipped";
                event["index"] = i + 1;
                event["name"] = stage.name;
                append_log(log_path, event);
                result.reports.push_back(std::move(report));
                continue;
            }
        }

        // stale outputs of earlier runs must not leak into this one
        std::error_code ec;
        for (const auto& out : out_paths) fs::remove_all(out, ec);
        fs::remove(marker, ec);

        auto t0 = std::chrono::steady_clock::now();
        try {
            report.report_json = run_stage(stage.name, stage.config_json, in_paths, out_paths,
                                           m.base_dir, jobs, use_cache);
        } catch (const std::exception& e) {
            fs::path quarantine = m.workspace / ".quarantine" / (tag + stage.name);
            fs::remove_all(quarantine, ec);
            bool moved = false;
            for (const auto& out : out_paths) {
                if (!fs::exists(out)) continue;
                fs::create_directories(quarantine);
                fs::rename(out, quarantine / out.filename(), ec);
                if (ec) fs::remove_all(out, ec);
                moved = true;
            }
            ojson event;
            event["event"] = "stage-failed";
            event["index"] = i + 1;
            event["name"] = stage.name;
            event["error"] = e.what();
            event["quarantined"] = moved;
            append_log(log_path, event);
            ojson err;
            err["stage"] = stage.name;
            err["index"] = i + 1;
            err["error"] = e.what();
            write_text(meta / (tag + stage.name + ".error.json"), safe_dump(err, 2) + "\n");
            throw Error("stage-failed", stage_label(m, i) + ": " + e.what());
        }
        report.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        ojson full;
        full["stage"] = stage.name;
        full["index"] = i + 1;
        full["seconds"] = report.seconds;
        full["report"] = ojson::parse(report.report_json);
        jsonio::save_file(full, report_path);

        ojson done;
        done["digest"] = digest;
        done["outputs"] = stage.outputs;
        jsonio::save_file(done, marker);

        ojson event;
        event["event"] = "stage-done";
        event["index"] = i + 1;
        event["name"] = stage.name;
        event["seconds"] = report.seconds;
        append_log(log_path, event);
        result.reports.push_back(std::move(report));
    }
    return result;
}

}  // namespace langkit::pipeline
