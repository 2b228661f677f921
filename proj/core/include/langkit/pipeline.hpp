#pragma once

// Declarative multi-stage runner: a manifest lists pipeline stages with their
// configs and data references; stages execute in order with digest-based
// resume, per-stage reports, and quarantine of failed partial outputs.

#include <filesystem>
#include <string>
#include <vector>

namespace langkit::pipeline {

// The closed set of runnable stage names.
const std::vector<std::string>& stage_names();
bool is_stage_name(const std::string& name);

struct StageSpec {
    std::string name;          // one of stage_names()
    std::string config_json;   // canonicalized stage config object
    std::vector<std::string> inputs;   // prior-stage output refs or existing paths
    std::vector<std::string> outputs;  // workspace-relative paths this stage writes
};

struct PipelineManifest {
    std::filesystem::path workspace;  // resolved against base_dir when relative
    std::vector<StageSpec> stages;
    std::filesystem::path base_dir;   // directory the manifest was loaded from
};

PipelineManifest load_pipeline_manifest(const std::filesystem::path& path);

// Structural checks: known stage names, input/output arity, parseable stage
// configs, unique in-workspace output paths, and resolvable references.
// Throws ValidationError describing the first violated constraint; an input
// fed by a stage that runs later is reported as a cycle.
void validate_manifest(const PipelineManifest& manifest);

struct StageReport {
    std::string name;
    bool skipped = false;
    double seconds = 0.0;
    std::string report_json;  // stage-specific payload
};

struct RunResult {
    std::vector<StageReport> reports;
};

// Executes the manifest in order. With resume=true a stage is skipped when
// its completion marker matches the digest of its config and inputs and its
// outputs still exist. A failing stage has its partial outputs moved to
// <workspace>/.quarantine and aborts the run with "stage-failed".
RunResult run_manifest(const PipelineManifest& manifest, bool resume, int jobs = 1,
                       bool use_cache = true);

// Runs one stage against already-resolved paths; the single execution path
// behind both run_manifest and the standalone subcommands. config-internal
// relative paths (templates, endpoint files, caches) resolve against
// config_base. Returns the stage report payload as JSON text.
std::string run_stage(const std::string& name, const std::string& config_json,
                      const std::vector<std::filesystem::path>& inputs,
                      const std::vector<std::filesystem::path>& outputs,
                      const std::filesystem::path& config_base, int jobs, bool use_cache);

// Content digest used for resume decisions: files hash their bytes,
// directories hash their sorted (relative path, file hash) listing.
std::string digest_path(const std::filesystem::path& path);

}  // namespace langkit::pipeline
