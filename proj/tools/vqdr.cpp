// vqdr: command-line entry point for feature extraction, codebook training,
// quantization, the codebook-size sweep, prosody deltas, listening-test
// plans and the listening service.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vqdr/corpus.hpp"
#include "vqdr/dsp.hpp"
#include "vqdr/metrics.hpp"
#include "vqdr/projection.hpp"
#include "vqdr/service.hpp"
#include "vqdr/sweep.hpp"
#include "vqdr/synth.hpp"
#include "vqdr/testbench.hpp"
#include "vqdr/vq.hpp"

namespace fs = std::filesystem;
using namespace vqdr;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string format = "table";
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--seed", common.seed, "Random seed")->capture_default_str();
  cmd->add_option("--jobs", common.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--format", common.format, "Output format")
      ->capture_default_str()
      ->check(CLI::IsMember({"table", "csv"}));
}

std::optional<fs::path> env_path(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return fs::path(v);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
  return out;
}

/// Writes to `path`, or stdout when the path is empty or "-".
template <class Fn>
void emit(const std::string& path, Fn fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    std::cout.flush();
  } else {
    auto out = open_out(path);
    fn(out);
  }
}

std::vector<fs::path> feature_files(const fs::path& root) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) return {root};
  require(fs::is_directory(root), ErrorCode::IoFailure, "no such features path " + root.string());
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".feat") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorCode::EmptyInput, "no .feat files under " + root.string());
  return files;
}

fs::path feature_path(const fs::path& dir, const ManifestEntry& e) { return dir / e.speaker_id / (e.utt_id + ".feat"); }

FeatureMatrix features_for(const CorpusManifest& manifest, const ManifestEntry& e, FeatureKind kind,
                           const FeatureConfig& config, bool use_cmvn) {
  const fs::path path = manifest.resolve(e);
  require(fs::is_regular_file(path), ErrorCode::IoFailure, "missing audio " + path.string());
  FeatureMatrix f = round_to_f32(extract_features(load_wav_resampled(path, config.sample_rate), kind, config));
  return use_cmvn ? round_to_f32(cmvn(f)) : f;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& item : split(text, ',')) {
    const auto t = std::string(trim(item));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vector quantization and duplicate reduction for accent conversion experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "vqdr 0.1.0");

  Common common;
  std::optional<std::string> corpus_root_flag;

  // features
  auto* features = app.add_subcommand("features", "Extract log-Mel or MFCC dumps for every manifest entry");
  std::string feat_manifest;
  std::string feat_out;
  std::string feat_kind = "mfcc";
  bool feat_cmvn = false;
  features->add_option("--manifest", feat_manifest, "Corpus manifest TSV")->required();
  features->add_option("--out", feat_out, "Output directory")->required();
  features->add_option("--kind", feat_kind, "Feature kind")
      ->capture_default_str()
      ->check(CLI::IsMember({"log_mel", "mfcc"}));
  features->add_flag("--cmvn", feat_cmvn, "Per-utterance mean/variance normalization");
  features->add_option("--corpus-root", corpus_root_flag, "Base for relative audio paths");
  add_common(features, common);

  // train-vq
  auto* train = app.add_subcommand("train-vq", "Train a k-means codebook on feature dumps");
  std::string train_features;
  std::string train_out;
  KMeansOptions km;
  train->add_option("--features", train_features, "Directory of .feat dumps or a single dump")->required();
  train->add_option("--out", train_out, "Codebook file")->required();
  train->add_option("-k,--k", km.k, "Codebook size")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--max-iters", km.max_iters, "Lloyd iteration cap")->capture_default_str();
  train->add_option("--rel-tol", km.rel_tol, "Relative distortion improvement to stop")->capture_default_str();
  train->add_option("--restarts", km.restarts, "Independent initializations")->capture_default_str();
  add_common(train, common);

  // quantize
  auto* quant = app.add_subcommand("quantize", "Map a feature dump to codes, optionally run-length reduced");
  std::string quant_features;
  std::string quant_codebook;
  std::string quant_out;
  bool quant_dedup = false;
  quant->add_option("--features", quant_features, "Feature dump")->required();
  quant->add_option("--codebook", quant_codebook, "Codebook file")->required();
  quant->add_option("--out", quant_out, "CSV output (default stdout)");
  quant->add_flag("--dedup", quant_dedup, "Remove consecutive duplicate codes");
  add_common(quant, common);

  // expand
  auto* expand_cmd = app.add_subcommand("expand", "Expand a run-length CSV back to frame codes");
  std::string expand_in;
  std::string expand_out;
  expand_cmd->add_option("--rls", expand_in, "Run-length CSV")->required();
  expand_cmd->add_option("--out", expand_out, "CSV output (default stdout)");
  add_common(expand_cmd, common);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Reconstruction MCD as a function of codebook size");
  std::string sweep_manifest;
  std::string sweep_out;
  std::string sweep_sizes = "8,16,32,64,128,256";
  std::string sweep_seeds = "1,2,3";
  std::string sweep_holdout;
  std::size_t sweep_max_iters = 100;
  double sweep_rel_tol = 1e-5;
  bool sweep_include_c0 = false;
  sweep->add_option("--manifest", sweep_manifest, "Corpus manifest TSV")->required();
  sweep->add_option("--out", sweep_out, "Output directory")->required();
  sweep->add_option("--sizes", sweep_sizes, "Comma-separated codebook sizes")->capture_default_str();
  sweep->add_option("--seeds", sweep_seeds, "Comma-separated seeds")->capture_default_str();
  sweep->add_option("--holdout-speakers", sweep_holdout,
                    "Comma-separated evaluation speakers (default: the last speaker)");
  sweep->add_option("--max-iters", sweep_max_iters, "Lloyd iteration cap")->capture_default_str();
  sweep->add_option("--rel-tol", sweep_rel_tol, "Relative distortion improvement to stop")->capture_default_str();
  sweep->add_flag("--include-c0", sweep_include_c0, "Keep c0 in the MCD sum");
  sweep->add_option("--corpus-root", corpus_root_flag, "Base for relative audio paths");
  add_common(sweep, common);

  // prosody
  auto* prosody = app.add_subcommand("prosody", "Duration and F0 deltas between two parallel manifests");
  std::string pros_a;
  std::string pros_b;
  std::string pros_out;
  bool pros_no_trim = false;
  prosody->add_option("--manifest-a", pros_a, "First manifest")->required();
  prosody->add_option("--manifest-b", pros_b, "Second manifest")->required();
  prosody->add_option("--out", pros_out, "Output file (default stdout)");
  prosody->add_flag("--no-trim", pros_no_trim, "Measure untrimmed audio");
  prosody->add_option("--corpus-root", corpus_root_flag, "Base for relative audio paths");
  add_common(prosody, common);

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "Build a counterbalanced AB/ABX listening-test plan");
  std::string plan_stimuli;
  std::string plan_out;
  std::string plan_design = "AB";
  std::vector<std::string> plan_pairings;
  std::size_t plan_trials = 16;
  std::string plan_id = "plan";
  plan_cmd->add_option("--stimuli", plan_stimuli, "Stimulus list TSV")->required();
  plan_cmd->add_option("--out", plan_out, "Plan file")->required();
  plan_cmd->add_option("--design", plan_design, "AB or ABX")->capture_default_str()->check(CLI::IsMember({"AB", "ABX"}));
  plan_cmd
      ->add_option("--pairing", plan_pairings,
                   "baseline,proposed[,reference][:question]; question defaults to comprehensibility for AB and "
                   "voice_similarity for ABX")
      ->required();
  plan_cmd->add_option("--trials", plan_trials, "Trials per listener")->capture_default_str();
  plan_cmd->add_option("--plan-id", plan_id, "Plan identifier")->capture_default_str();
  add_common(plan_cmd, common);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve plans and stimuli to the browser client");
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::optional<std::string> serve_plans;
  std::optional<std::string> serve_state;
  std::optional<std::string> serve_static;
  serve->add_option("--host", serve_host, "Listen address")->capture_default_str()->envname("VQDR_HOST");
  serve->add_option("--port", serve_port, "Listen port (0 picks a free one)")->capture_default_str()->envname("VQDR_PORT");
  serve->add_option("--plans", serve_plans, "Directory of .plan files")->envname("VQDR_PLAN_DIR");
  serve->add_option("--state-dir", serve_state, "Response and session logs (default: plan directory)")
      ->envname("VQDR_STATE_DIR");
  serve->add_option("--static", serve_static, "Directory of static client assets")->envname("VQDR_STATIC_DIR");
  serve->add_option("--corpus-root", corpus_root_flag, "Base for relative stimulus paths");
  add_common(serve, common);

  // results
  auto* results = app.add_subcommand("results", "Aggregate a response log against its plan");
  std::string res_plan;
  std::string res_responses;
  std::string res_out;
  results->add_option("--plan", res_plan, "Plan file")->required();
  results->add_option("--responses", res_responses, "Response JSONL log")->required();
  results->add_option("--out", res_out, "Output file (default stdout)");
  add_common(results, common);

  // bottleneck
  auto* bottleneck = app.add_subcommand("bottleneck", "Timing diagnostics before and after duplicate removal");
  std::string bn_features;
  std::string bn_codebook;
  std::string bn_out;
  bottleneck->add_option("--features", bn_features, "Directory of .feat dumps")->required();
  bottleneck->add_option("--codebook", bn_codebook, "Codebook file")->required();
  bottleneck->add_option("--out", bn_out, "Output file (default stdout)");
  add_common(bottleneck, common);

  // project
  auto* project = app.add_subcommand("project", "2-D projection of embeddings (CSV rows: label,v1,v2,...)");
  std::string proj_in;
  std::string proj_out;
  std::string proj_method = "pca";
  ProjectionOptions proj;
  project->add_option("--embeddings", proj_in, "Embedding CSV")->required();
  project->add_option("--out", proj_out, "Output file (default stdout)");
  project->add_option("--method", proj_method, "pca or tsne")->capture_default_str()->check(CLI::IsMember({"pca", "tsne"}));
  project->add_option("--perplexity", proj.perplexity, "t-SNE perplexity")->capture_default_str();
  project->add_option("--iterations", proj.iterations, "t-SNE steps")->capture_default_str();
  add_common(project, common);

  // synth-corpus
  auto* synth_cmd = app.add_subcommand("synth-corpus", "Render the synthetic parallel desk corpus");
  std::string synth_out;
  synth::CorpusSpec spec;
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--speakers", spec.speakers, "Speakers")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--utterances", spec.utterances_per_speaker, "Utterances per speaker")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  add_common(synth_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  std::cerr << "# vqdr " << cmd->get_name() << " resolved config\n" << cmd->config_to_str(true, false);
  const auto corpus_root = [&]() -> std::optional<fs::path> {
    if (corpus_root_flag) return fs::path(*corpus_root_flag);
    return env_path("VQDR_CORPUS_ROOT");
  };

  try {
    if (cmd == features) {
      const FeatureKind kind = parse_feature_kind(feat_kind);
      const FeatureConfig config;
      config.validate();
      const CorpusManifest manifest = read_manifest(feat_manifest, corpus_root());
      for (const auto& e : manifest.entries) {
        const fs::path out = feature_path(feat_out, e);
        fs::create_directories(out.parent_path());
        save_features(features_for(manifest, e, kind, config, feat_cmvn), out);
      }
      std::cout << manifest.size() << " feature dumps written to " << feat_out << '\n';

    } else if (cmd == train) {
      std::vector<FeatureMatrix> utts;
      for (const auto& f : feature_files(train_features)) utts.push_back(load_features(f));
      km.seed = common.seed;
      km.jobs = common.jobs;
      const Codebook cb = train_codebook(utts, km);
      save_codebook(cb, train_out);
      std::cout << "k=" << cb.k() << " dim=" << cb.dim() << " iterations=" << cb.iterations_run
                << " distortion=" << std::setprecision(10) << cb.final_distortion << '\n';

    } else if (cmd == quant) {
      const FeatureMatrix f = load_features(quant_features);
      const Codebook cb = load_codebook(quant_codebook);
      const CodeSequence codes = quantize(f, cb);
      emit(quant_out, [&](std::ostream& out) {
        if (quant_dedup) {
          write_rls_csv(remove_duplicates(codes), out);
        } else {
          write_codes_csv(codes, out);
        }
      });

    } else if (cmd == expand_cmd) {
      std::ifstream in(expand_in);
      require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + expand_in);
      const CodeSequence codes = expand(read_rls_csv(in));
      emit(expand_out, [&](std::ostream& out) { write_codes_csv(codes, out); });

    } else if (cmd == sweep) {
      SweepOptions options;
      for (const auto& s : split_list(sweep_sizes)) {
        try {
          options.sizes.push_back(std::stoul(s));
        } catch (const std::logic_error&) {
          throw UsageError("bad codebook size '" + s + "'");
        }
      }
      for (const auto& s : split_list(sweep_seeds)) {
        try {
          options.seeds.push_back(std::stoull(s));
        } catch (const std::logic_error&) {
          throw UsageError("bad seed '" + s + "'");
        }
      }
      if (options.sizes.empty()) throw UsageError("--sizes must list at least one codebook size");
      if (options.seeds.empty()) throw UsageError("--seeds must list at least one seed");
      options.max_iters = sweep_max_iters;
      options.rel_tol = sweep_rel_tol;
      options.jobs = common.jobs;
      options.exclude_c0 = !sweep_include_c0;

      const CorpusManifest manifest = read_manifest(sweep_manifest, corpus_root());
      validate_manifest(manifest);
      const auto spk = speakers(manifest);
      require(spk.size() >= 2, ErrorCode::InsufficientUtterances, "sweep needs at least two speakers");
      std::vector<std::string> holdout = split_list(sweep_holdout);
      if (holdout.empty()) holdout.push_back(spk.back());
      for (const auto& h : holdout) {
        require(std::find(spk.begin(), spk.end(), h) != spk.end(), ErrorCode::UnknownSpeaker, h);
      }
      std::vector<FeatureMatrix> train_set;
      std::vector<FeatureMatrix> eval_set;
      const FeatureConfig config;
      for (const auto& e : manifest.entries) {
        auto f = features_for(manifest, e, FeatureKind::mfcc, config, false);
        const bool held = std::find(holdout.begin(), holdout.end(), e.speaker_id) != holdout.end();
        (held ? eval_set : train_set).push_back(std::move(f));
      }
      const SweepReport report = codebook_sweep(train_set, eval_set, options);
      const SweepStatistics stats = sweep_statistics(report);
      fs::create_directories(sweep_out);
      {
        auto out = open_out(fs::path(sweep_out) / "sweep.csv");
        write_sweep_csv(report, out);
      }
      {
        auto out = open_out(fs::path(sweep_out) / "sweep.svg");
        write_sweep_svg(report, out);
      }
      {
        auto out = open_out(fs::path(sweep_out) / "sweep_stats.csv");
        write_sweep_statistics_csv(stats, out);
      }
      if (common.format == "csv") {
        write_sweep_csv(report, std::cout);
      } else {
        write_sweep_table(report, std::cout);
      }

    } else if (cmd == prosody) {
      const CorpusManifest a = read_manifest(pros_a, corpus_root());
      const CorpusManifest b = read_manifest(pros_b, corpus_root());
      // Pair on utt_id when it identifies an entry on both sides, else on (speaker_id, utt_id).
      const auto unique_utts = [](const CorpusManifest& m) {
        std::set<std::string> ids;
        for (const auto& e : m.entries) {
          if (!ids.insert(e.utt_id).second) return false;
        }
        return true;
      };
      const bool by_utt = unique_utts(a) && unique_utts(b);
      const auto key = [&](const ManifestEntry& e) { return by_utt ? e.utt_id : e.speaker_id + '\x1f' + e.utt_id; };
      std::map<std::string, const ManifestEntry*> b_by_key;
      for (const auto& e : b.entries) b_by_key[key(e)] = &e;
      TrimConfig trim;
      trim.enabled = !pros_no_trim;
      std::vector<std::pair<ProsodyProfile, ProsodyProfile>> pairs;
      for (const auto& e : a.entries) {
        const auto it = b_by_key.find(key(e));
        if (it == b_by_key.end()) continue;
        pairs.emplace_back(analyze_prosody(load_wav_resampled(a.resolve(e)), trim),
                           analyze_prosody(load_wav_resampled(b.resolve(*it->second)), trim));
      }
      require(!pairs.empty(), ErrorCode::NoComparablePairs, "the manifests share no utterances");
      const ProsodyDelta d = prosody_delta(pairs);
      emit(pros_out, [&](std::ostream& out) {
        out << std::setprecision(10);
        if (common.format == "csv") {
          out << "d_duration_ms,d_f0_avg_hz,d_f0_range_hz,pairs_used,pairs_skipped\n"
              << d.d_duration_ms << ',' << d.d_f0_avg_hz << ',' << d.d_f0_range_hz << ',' << d.pairs_used << ','
              << d.pairs_skipped << '\n';
        } else {
          out << "delta duration (ms)  " << d.d_duration_ms << "\ndelta F0 avg (Hz)    " << d.d_f0_avg_hz
              << "\ndelta F0 range (Hz)  " << d.d_f0_range_hz << "\npairs used " << d.pairs_used << ", skipped "
              << d.pairs_skipped << '\n';
        }
      });

    } else if (cmd == plan_cmd) {
      std::ifstream in(plan_stimuli);
      require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + plan_stimuli);
      const auto stimuli = read_stimuli(in);
      const Design design = parse_design(plan_design);
      std::vector<Pairing> pairings;
      for (const auto& text : plan_pairings) {
        const auto colon = text.find(':');
        const auto tags = split_list(text.substr(0, colon));
        if (tags.size() < 2 || tags.size() > 3) throw UsageError("pairing '" + text + "' needs 2 or 3 system tags");
        Pairing p;
        p.system_1 = tags[0];
        p.system_2 = tags[1];
        if (tags.size() == 3) p.reference = tags[2];
        p.question = colon == std::string::npos
                         ? (design == Design::AB ? Question::comprehensibility : Question::voice_similarity)
                         : parse_question(text.substr(colon + 1));
        pairings.push_back(std::move(p));
      }
      const TestPlan plan = build_test_plan(stimuli, design, pairings, plan_trials, common.seed, plan_id);
      save_plan(plan, plan_out);
      std::cout << plan.trials.size() << " trials written to " << plan_out << '\n';

    } else if (cmd == serve) {
      ServiceConfig config;
      require(serve_plans.has_value(), ErrorCode::InvalidArgument, "--plans or VQDR_PLAN_DIR is required");
      config.plan_dir = *serve_plans;
      if (const auto root = corpus_root()) config.corpus_root = *root;
      if (serve_state) config.state_dir = *serve_state;
      if (serve_static) config.static_dir = fs::path(*serve_static);
      if (const char* salt = std::getenv("VQDR_TOKEN_SALT")) config.token_salt = salt;
      ListeningService service(config);
      httplib::Server server;
      install_routes(server, service);
      const int port = serve_port == 0 ? server.bind_to_any_port(serve_host)
                                       : (server.bind_to_port(serve_host, serve_port) ? serve_port : -1);
      require(port > 0, ErrorCode::IoFailure, "cannot bind " + serve_host + ":" + std::to_string(serve_port));
      std::cout << "listening on http://" << serve_host << ':' << port << " with " << service.plan_ids().size()
                << " plan(s)" << std::endl;
      server.listen_after_bind();

    } else if (cmd == results) {
      const TestPlan plan = load_plan(res_plan);
      std::ifstream in(res_responses);
      require(static_cast<bool>(in) || !fs::exists(res_responses), ErrorCode::IoFailure,
              "cannot open " + res_responses);
      const auto responses = in ? read_responses(in) : std::vector<TrialResponse>{};
      emit(res_out, [&](std::ostream& out) { write_aggregate_csv(aggregate(responses, plan), out); });

    } else if (cmd == bottleneck) {
      const Codebook cb = load_codebook(bn_codebook);
      std::vector<BottleneckItem> items;
      for (const auto& f : feature_files(bn_features)) {
        const FeatureMatrix m = load_features(f);
        require(m.frames() > 0, ErrorCode::EmptyInput, "empty dump " + f.string());
        BottleneckItem item;
        item.codes = quantize(m, cb);
        item.runs = remove_duplicates(item.codes);
        item.duration_s = static_cast<double>(m.frames() - 1) * m.frame_hop_s + m.frame_len_s;
        items.push_back(std::move(item));
      }
      const BottleneckReport r = bottleneck_report(items);
      emit(bn_out, [&](std::ostream& out) {
        if (common.format == "csv") {
          write_bottleneck_csv(r, out);
        } else {
          const auto opt = [](const std::optional<double>& v) {
            if (!v) return std::string("undefined");
            std::ostringstream s;
            s << std::setprecision(17) << *v;
            return s.str();
          };
          out << "utterances              " << r.utterances << "\npre-DR correlation      "
              << opt(r.pre_dr_correlation) << "\npost-DR correlation     " << opt(r.post_dr_correlation)
              << "\nmean compression ratio  " << r.mean_compression_ratio << "\nusage entropy (bits)    "
              << r.usage_entropy_bits << "\ncodes used              " << r.codes_used << '\n';
        }
      });

    } else if (cmd == project) {
      std::ifstream in(proj_in);
      require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + proj_in);
      std::vector<std::string> labels;
      RealMatrix points;
      std::string line;
      while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split(std::string(trim(line)), ',');
        require(fields.size() >= 2, ErrorCode::ParseError, "embedding row needs a label and values");
        std::vector<double> values;
        for (std::size_t i = 1; i < fields.size(); ++i) {
          try {
            values.push_back(std::stod(fields[i]));
          } catch (const std::logic_error&) {
            fail(ErrorCode::ParseError, "bad embedding value '" + fields[i] + "'");
          }
        }
        if (points.rows() == 0) points = RealMatrix(0, values.size());
        require(values.size() == points.cols(), ErrorCode::DimensionMismatch, "embedding rows differ in length");
        labels.push_back(fields[0]);
        points.append_row(values);
      }
      proj.method = proj_method == "pca" ? ProjectionMethod::pca : ProjectionMethod::tsne;
      proj.seed = common.seed;
      const RealMatrix xy = project_2d(points, proj);
      emit(proj_out, [&](std::ostream& out) {
        out << "label,x,y\n" << std::setprecision(10);
        for (std::size_t i = 0; i < xy.rows(); ++i) out << labels[i] << ',' << xy(i, 0) << ',' << xy(i, 1) << '\n';
      });

    } else if (cmd == synth_cmd) {
      if (synth_cmd->get_option("--seed")->count() > 0) spec.seed = common.seed;
      const CorpusManifest m = synth::write_corpus(synth_out, spec);
      std::cout << m.size() << " utterances written to " << synth_out << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "vqdr " << cmd->get_name() << ": usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "vqdr " << cmd->get_name() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "vqdr " << cmd->get_name() << ": " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
