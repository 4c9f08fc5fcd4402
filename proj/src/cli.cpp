#include "clinstructor/cli.hpp"

#include <filesystem>
#include <optional>
#include <unordered_map>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "clinstructor/analysis.hpp"
#include "clinstructor/cluster_select.hpp"
#include "clinstructor/config.hpp"
#include "clinstructor/corpus.hpp"
#include "clinstructor/extract.hpp"
#include "clinstructor/identify.hpp"
#include "clinstructor/log.hpp"
#include "clinstructor/predictor.hpp"

namespace clinstructor::cli {
namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
  std::string config_path;
  std::string backend;
  std::string model;
  std::size_t parallelism = 0;
  std::string cache_dir;
  bool no_cache = false;
  bool force = false;
  bool quiet = false;
};

PipelineConfig resolve_config(const GlobalFlags& g) {
  PipelineConfig cfg = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (!g.backend.empty()) cfg.backend = g.backend;
  if (!g.model.empty()) cfg.model_id = g.model;
  if (g.parallelism > 0) cfg.parallelism = g.parallelism;
  if (!g.cache_dir.empty()) cfg.cache_dir = fs::path(g.cache_dir);
  if (g.no_cache) cfg.use_cache = false;
  cfg.validate();
  return cfg;
}

// True when `path` exists and the command should leave it alone.
bool keep_existing(const fs::path& path, const GlobalFlags& g, std::ostream& out) {
  if (g.force || !fs::exists(path)) return false;
  out << path.string() << " exists; skipping (pass --force to overwrite)\n";
  return true;
}

identify::PromptOptions prompt_options(const PipelineConfig& cfg) {
  return {cfg.model_id, cfg.temperature, cfg.max_tokens};
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  for (const auto& part : split(s, ',')) {
    const auto t = trim(part);
    if (t.empty()) continue;
    try {
      if constexpr (std::is_same_v<T, double>) {
        out.push_back(std::stod(t));
      } else {
        out.push_back(static_cast<T>(std::stoull(t)));
      }
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("cannot parse {} list \"{}\"", what, s));
    }
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"clinstructor: structure free-text notes into question-answer records and train an "
               "additive classifier on them"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--config", g.config_path, "Pipeline config JSON");
  app.add_option("--backend", g.backend, "LLM backend: mock or http");
  app.add_option("--model", g.model, "Model id sent to the backend");
  app.add_option("--parallelism", g.parallelism, "Concurrent LLM requests");
  app.add_option("--cache-dir", g.cache_dir, "Response cache directory");
  app.add_flag("--no-cache", g.no_cache, "Disable the response cache");
  app.add_flag("--force", g.force, "Overwrite existing outputs");
  app.add_flag("--quiet", g.quiet, "Only log warnings and errors");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus with ground truth");
  std::string synth_out, synth_truth;
  std::size_t synth_n = 2000;
  double synth_pos = 0.5, synth_na = 0.1;
  std::uint64_t synth_seed = 1;
  synth->add_option("--out", synth_out, "Notes JSONL")->required();
  synth->add_option("--truth", synth_truth, "Ground-truth JSONL");
  synth->add_option("--num-notes", synth_n);
  synth->add_option("--positive-rate", synth_pos);
  synth->add_option("--na-rate", synth_na);
  synth->add_option("--seed", synth_seed);

  // identify
  auto* ident = app.add_subcommand("identify", "Collect candidate features from sampled notes");
  std::string id_notes, id_out;
  std::size_t id_sample = 0;
  ident->add_option("--notes", id_notes, "Notes JSONL")->required();
  ident->add_option("--out", id_out, "Candidates JSONL")->required();
  ident->add_option("--sample-n", id_sample, "Notes to sample (default from config: 1000)");

  // select
  auto* sel = app.add_subcommand("select", "Cluster candidates and pick the top-K questions");
  std::string sel_cand, sel_out;
  std::size_t sel_k = 0;
  sel->add_option("--candidates", sel_cand)->required();
  sel->add_option("--out", sel_out, "Question set JSON")->required();
  sel->add_option("--k", sel_k, "Number of questions (default from config: 50)");

  // review
  auto* rev = app.add_subcommand("review", "Apply human edits to a question set");
  std::string rev_qs, rev_out, rev_edits;
  std::vector<std::string> rev_drop;
  rev->add_option("--question-set", rev_qs)->required();
  rev->add_option("--out", rev_out)->required();
  rev->add_option("--edits", rev_edits, "Review edits JSONL");
  rev->add_option("--drop", rev_drop, "Question to drop (repeatable)");

  // extract
  auto* ext = app.add_subcommand("extract", "Answer the question set for every note");
  std::string ext_notes, ext_qs, ext_out;
  ext->add_option("--notes", ext_notes)->required();
  ext->add_option("--question-set", ext_qs)->required();
  ext->add_option("--out", ext_out, "Structured records JSONL (resumed if present)")->required();

  // build
  auto* build = app.add_subcommand("build", "Balance and split structured records");
  std::string b_notes, b_records, b_out, b_ratios;
  bool b_no_balance = false;
  build->add_option("--notes", b_notes, "Notes JSONL (labels and split tags)")->required();
  build->add_option("--records", b_records)->required();
  build->add_option("--out-dir", b_out)->required();
  build->add_option("--ratios", b_ratios, "train,val,test fractions; omit to use split tags");
  build->add_flag("--no-balance", b_no_balance, "Skip negative subsampling");

  // train
  auto* tr = app.add_subcommand("train", "Train the additive model");
  std::string t_train, t_val, t_qs, t_out, t_grid;
  std::optional<double> t_lr, t_l2;
  std::optional<std::size_t> t_epochs, t_eval_every;
  tr->add_option("--train", t_train)->required();
  tr->add_option("--val", t_val)->required();
  tr->add_option("--question-set", t_qs)->required();
  tr->add_option("--out", t_out, "Model JSON")->required();
  tr->add_option("--lr", t_lr);
  tr->add_option("--epochs", t_epochs);
  tr->add_option("--l2", t_l2);
  tr->add_option("--eval-every", t_eval_every);
  tr->add_option("--grid", t_grid, "Comma-separated learning rates to search");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a model on records");
  std::string e_model, e_records, e_qs, e_out;
  ev->add_option("--model", e_model)->required();
  ev->add_option("--records", e_records)->required();
  ev->add_option("--question-set", e_qs, "Optional cross-check against the model");
  ev->add_option("--out", e_out, "Metrics JSON");

  // analyze
  auto* an = app.add_subcommand("analyze", "Analyses over records, question sets and models");
  an->require_subcommand(1);
  auto* na = an->add_subcommand("na-stats", "Distribution of non-N/A answers per record");
  std::string na_records, na_out, na_csv;
  na->add_option("--records", na_records)->required();
  na->add_option("--out", na_out, "NaStats JSON");
  na->add_option("--csv", na_csv, "Histogram CSV (a .gp gnuplot script is written next to it)");
  auto* abl = an->add_subcommand("ablation", "Retrain on top-k question prefixes");
  std::string a_train, a_val, a_test, a_qs, a_out, a_klist = "10,20,30,40,50";
  abl->add_option("--train", a_train)->required();
  abl->add_option("--val", a_val)->required();
  abl->add_option("--test", a_test)->required();
  abl->add_option("--question-set", a_qs)->required();
  abl->add_option("--k-list", a_klist);
  abl->add_option("--out", a_out, "Ablation CSV");
  auto* rep = an->add_subcommand("report", "Top questions table");
  std::string r_qs, r_csv;
  std::size_t r_top = 5;
  rep->add_option("--question-set", r_qs)->required();
  rep->add_option("--top-n", r_top);
  rep->add_option("--csv", r_csv);
  auto* con = an->add_subcommand("contributions", "Per-question contributions for one record");
  std::string c_model, c_records, c_qs, c_note;
  con->add_option("--model", c_model)->required();
  con->add_option("--records", c_records)->required();
  con->add_option("--question-set", c_qs)->required();
  con->add_option("--note-id", c_note)->required();

  // export-finetune
  auto* exp = app.add_subcommand("export-finetune", "Write Q/A text sequences for LLM fine-tuning");
  std::string x_records, x_qs, x_out;
  exp->add_option("--records", x_records)->required();
  exp->add_option("--question-set", x_qs)->required();
  exp->add_option("--out", x_out)->required();

  // cache
  auto* cache = app.add_subcommand("cache", "Inspect or clear the response cache");
  cache->require_subcommand(1);
  auto* cache_stats = cache->add_subcommand("stats");
  auto* cache_clear = cache->add_subcommand("clear");

  std::vector<const char*> argv{"clinstructor"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return 2;
  }

  const auto old_level = log::level();
  if (g.quiet) log::set_level(log::Level::kWarn);
  struct RestoreLevel {
    log::Level l;
    ~RestoreLevel() { log::set_level(l); }
  } restore{old_level};

  try {
    const auto cfg = resolve_config(g);

    if (synth->parsed()) {
      if (keep_existing(synth_out, g, out)) return 0;
      corpus::SyntheticSpec spec{synth_n, synth_pos, corpus::default_attribute_pool(), synth_na,
                                 synth_seed};
      const auto corpus = corpus::generate_synthetic_corpus(spec);
      corpus::write_notes(synth_out, corpus.notes);
      if (!synth_truth.empty()) corpus::write_truth(synth_truth, corpus.truth);
      out << fmt::format("wrote {} notes to {}\n", corpus.notes.size(), synth_out);
      return 0;
    }

    if (ident->parsed()) {
      if (keep_existing(id_out, g, out)) return 0;
      const auto notes = corpus::load_notes(id_notes);
      const auto n = id_sample > 0 ? id_sample : cfg.identification_sample_n;
      const auto sample = corpus::sample_identification_notes(notes, n, cfg.sampling_seed);
      auto gateway = make_gateway(cfg);
      const auto result = identify::run_identification(
          sample, *gateway, {prompt_options(cfg), cfg.candidates_per_note});
      identify::write_candidates(id_out, result.pool.candidates);
      out << fmt::format("pool_size={} notes={} failures={} cache_hits={}\n",
                         result.pool.candidates.size(), result.pool.sampled_note_ids.size(),
                         result.failures.size(), result.gateway_stats.cache_hits);
      return 0;
    }

    if (sel->parsed()) {
      if (keep_existing(sel_out, g, out)) return 0;
      const auto candidates = identify::load_candidates(sel_cand);
      if (candidates.empty()) throw Error("candidate file is empty");
      const auto clusters = cluster::cluster_candidates(candidates);
      const auto qs = cluster::rank_and_select(clusters, candidates, sel_k > 0 ? sel_k : cfg.k);
      cluster::write_question_set(sel_out, qs);
      out << fmt::format("clusters={} selected={} digest={}\n", clusters.size(), qs.k(),
                         cluster::digest(qs));
      return 0;
    }

    if (rev->parsed()) {
      if (keep_existing(rev_out, g, out)) return 0;
      const auto qs = cluster::load_question_set(rev_qs);
      std::vector<cluster::ReviewEdit> edits;
      if (!rev_edits.empty()) edits = cluster::load_review_edits(rev_edits);
      for (const auto& q : rev_drop) {
        cluster::ReviewEdit e;
        e.action = cluster::ReviewEdit::Action::kDrop;
        e.question = q;
        edits.push_back(e);
      }
      if (edits.empty()) throw ConfigError("review needs --edits or --drop");
      const auto reviewed = cluster::apply_review(qs, edits);
      cluster::write_question_set(rev_out, reviewed);
      out << fmt::format("entries={} digest={}\n", reviewed.k(), cluster::digest(reviewed));
      return 0;
    }

    if (ext->parsed()) {
      const auto notes = corpus::load_notes(ext_notes);
      const auto qs = cluster::load_question_set(ext_qs);
      if (g.force && fs::exists(ext_out)) fs::remove(ext_out);
      auto gateway = make_gateway(cfg);
      extract::ExtractOptions opts;
      opts.prompt = prompt_options(cfg);
      opts.output_path = fs::path(ext_out);
      const auto result = extract::run_extraction(notes, qs, *gateway, opts);
      out << fmt::format("records={} resumed={} failures={} cache_hits={}\n",
                         result.records.size(), result.resumed, result.failures.size(),
                         gateway->stats().cache_hits);
      return 0;
    }

    if (build->parsed()) {
      const fs::path dir(b_out);
      if (keep_existing(dir / "train.jsonl", g, out)) return 0;
      const auto notes = corpus::load_notes(b_notes);
      const auto records = extract::load_records(b_records);
      std::unordered_map<std::string, const extract::StructuredRecord*> rec_by_id;
      for (const auto& r : records) rec_by_id.emplace(r.note_id, &r);
      std::vector<corpus::AdmissionNote> usable;
      for (const auto& n : notes) {
        if (rec_by_id.count(n.note_id)) usable.push_back(n);
      }
      if (usable.size() != records.size()) {
        throw Error("records reference note ids missing from the notes file");
      }
      if (!b_no_balance) usable = corpus::balanced_subsample(usable, cfg.sampling_seed);
      std::optional<corpus::SplitRatios> ratios;
      if (!b_ratios.empty()) {
        const auto r = parse_list<double>(b_ratios, "ratio");
        if (r.size() != 3) throw ConfigError("--ratios needs three comma-separated fractions");
        ratios = corpus::SplitRatios{r[0], r[1], r[2]};
      }
      const auto splits = corpus::resolve_splits(usable, ratios, cfg.sampling_seed);
      auto emit = [&](const std::vector<corpus::AdmissionNote>& part, const char* name) {
        std::vector<extract::StructuredRecord> rs;
        for (const auto& n : part) rs.push_back(*rec_by_id.at(n.note_id));
        extract::write_records(dir / (std::string(name) + ".jsonl"), rs);
        return rs.size();
      };
      const auto n_train = emit(splits.train, "train");
      const auto n_val = emit(splits.val, "val");
      const auto n_test = emit(splits.test, "test");
      out << fmt::format("train={} val={} test={}\n", n_train, n_val, n_test);
      return 0;
    }

    if (tr->parsed()) {
      if (keep_existing(t_out, g, out)) return 0;
      const auto qs = cluster::load_question_set(t_qs);
      auto tcfg = cfg.train;
      if (t_lr) tcfg.learning_rate = *t_lr;
      if (t_epochs) tcfg.epochs = *t_epochs;
      if (t_l2) tcfg.l2 = *t_l2;
      if (t_eval_every) tcfg.eval_every = *t_eval_every;
      if (!t_grid.empty()) tcfg.grid = parse_list<double>(t_grid, "learning-rate");
      tcfg.seed = cfg.training_seed;
      const auto result = predictor::train(extract::load_records(t_train),
                                           extract::load_records(t_val), qs, cfg.encoder, tcfg);
      predictor::write_model(t_out, result.model);
      out << fmt::format("best_val_bce={:.6f} best_epoch={} learning_rate={}\n",
                         result.best_val_bce, result.best_epoch, result.learning_rate);
      return 0;
    }

    if (ev->parsed()) {
      const auto model = predictor::load_model(e_model);
      if (!e_qs.empty() && cluster::digest(cluster::load_question_set(e_qs)) != model.question_set_digest) {
        throw DigestMismatch("question set " + e_qs + " does not match the model");
      }
      const auto metrics = predictor::evaluate(model, extract::load_records(e_records));
      if (!e_out.empty()) write_text_file(e_out, predictor::to_json(metrics).dump(2) + "\n");
      out << fmt::format("auc={:.6f}\nmean_bce={:.6f}\nn_pos={}\nn_neg={}\n", metrics.auc,
                         metrics.mean_bce, metrics.n_pos, metrics.n_neg);
      return 0;
    }

    if (na->parsed()) {
      const auto records = extract::load_records(na_records);
      if (records.empty()) throw Error("no records in " + na_records);
      const auto stats = analysis::na_distribution(records, records.front().answers.size());
      const auto j = analysis::to_json(stats);
      if (!na_out.empty()) write_text_file(na_out, j.dump(2) + "\n");
      if (!na_csv.empty()) {
        write_text_file(na_csv, analysis::histogram_csv(stats));
        auto gp = fs::path(na_csv).replace_extension(".gp");
        write_text_file(gp, analysis::histogram_gnuplot(fs::path(na_csv).filename().string()));
      }
      out << fmt::format("na_fraction={:.6f}\nmean_effective={:.6f}\nrecords={}\n",
                         stats.na_fraction, stats.mean_effective, stats.num_records);
      return 0;
    }

    if (abl->parsed()) {
      const auto qs = cluster::load_question_set(a_qs);
      analysis::RecordSplits splits{extract::load_records(a_train), extract::load_records(a_val),
                                    extract::load_records(a_test)};
      const auto k_list = parse_list<std::size_t>(a_klist, "k");
      auto tcfg = cfg.train;
      tcfg.seed = cfg.training_seed;
      const auto rows = analysis::topk_ablation(splits, qs, k_list, cfg.encoder, tcfg, cfg.parallelism);
      const auto csv = analysis::ablation_csv(rows);
      if (!a_out.empty()) write_text_file(a_out, csv);
      out << csv;
      return 0;
    }

    if (rep->parsed()) {
      const auto report = analysis::question_report(cluster::load_question_set(r_qs), r_top);
      if (!r_csv.empty()) write_text_file(r_csv, report.csv());
      out << report.text();
      return 0;
    }

    if (con->parsed()) {
      const auto model = predictor::load_model(c_model);
      const auto qs = cluster::load_question_set(c_qs);
      for (const auto& r : extract::load_records(c_records)) {
        if (r.note_id == c_note) {
          out << analysis::contribution_report(model, r, qs).text();
          return 0;
        }
      }
      throw Error("note " + c_note + " not found in " + c_records);
    }

    if (exp->parsed()) {
      if (keep_existing(x_out, g, out)) return 0;
      const auto records = extract::load_records(x_records);
      extract::export_finetune_file(records, cluster::load_question_set(x_qs), x_out);
      out << fmt::format("exported {} sequences to {}\n", records.size(), x_out);
      return 0;
    }

    if (cache->parsed()) {
      llm::ResponseCache store(cfg.resolved_cache_dir());
      if (cache_stats->parsed()) {
        const auto s = store.stats();
        out << fmt::format("dir={}\nentries={}\nbytes={}\n", store.dir().string(), s.entries, s.bytes);
      } else if (cache_clear->parsed()) {
        out << fmt::format("removed={}\n", store.clear());
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace clinstructor::cli
