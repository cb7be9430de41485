#include "meel/cli.hpp"

#include <fstream>
#include <json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "meel/error.hpp"
#include "meel/io.hpp"

namespace meel::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::kConfig, "config field '" + field + "' " + why);
}

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& known) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) bad(where.empty() ? key : where + "." + key, "is not a recognized key");
  }
}

const json* object_section(const json& root, const char* name) {
  if (!root.contains(name)) return nullptr;
  const json& s = root[name];
  if (!s.is_object()) bad(name, "must be an object");
  return &s;
}

std::size_t read_count(const json& v, const std::string& field) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    bad(field, "must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double read_real(const json& v, const std::string& field) {
  if (!v.is_number()) bad(field, "must be a number");
  return v.get<double>();
}

bool read_bool(const json& v, const std::string& field) {
  if (!v.is_boolean()) bad(field, "must be true or false");
  return v.get<bool>();
}

template <typename T, typename Read>
void maybe(const json& section, const std::string& prefix, const char* key, T& dst, Read read) {
  if (section.contains(key)) dst = static_cast<T>(read(section[key], prefix + "." + key));
}

EvalEncoder parse_encoder(const std::string& name, const std::string& field) {
  if (name == "momentum") return EvalEncoder::kMomentum;
  if (name == "query") return EvalEncoder::kQuery;
  bad(field, "must be \"momentum\" or \"query\" (got \"" + name + "\")");
}

const char* encoder_name(EvalEncoder e) { return e == EvalEncoder::kMomentum ? "momentum" : "query"; }

void check_split_name(const std::string& name, const std::string& field) {
  if (name != "train" && name != "val" && name != "test") {
    bad(field, "must be \"train\", \"val\" or \"test\" (got \"" + name + "\")");
  }
}

void parse_data(const json& s, const fs::path& base, CliConfig& c) {
  reject_unknown(s, "data",
                 {"manifest", "n_videos", "captions_per_video", "latent_dim", "video_dim", "text_dim",
                  "noise_std", "seed", "train_videos", "val_videos", "test_videos"});
  if (s.contains("manifest")) {
    if (s.size() > 1) bad("data.manifest", "cannot be combined with synthetic generator fields");
    if (!s["manifest"].is_string()) bad("data.manifest", "must be a path string");
    const fs::path p(s["manifest"].get<std::string>());
    c.manifest = p.is_absolute() || base.empty() ? p : base / p;
    return;
  }
  SynthConfig& d = c.synth;
  maybe(s, "data", "n_videos", d.n_videos, read_count);
  maybe(s, "data", "captions_per_video", d.captions_per_video, read_count);
  maybe(s, "data", "latent_dim", d.latent_dim, read_count);
  maybe(s, "data", "video_dim", d.video_dim, read_count);
  maybe(s, "data", "text_dim", d.text_dim, read_count);
  maybe(s, "data", "noise_std", d.noise_std, read_real);
  maybe(s, "data", "seed", d.seed, read_count);
  maybe(s, "data", "train_videos", d.train_videos, read_count);
  maybe(s, "data", "val_videos", d.val_videos, read_count);
  maybe(s, "data", "test_videos", d.test_videos, read_count);
  c.data_seed_given = s.contains("seed");
}

void parse_train(const json& s, CliConfig& c) {
  reject_unknown(s, "train",
                 {"dim", "hidden_dims", "batch_size", "queue_size", "temperature", "margin",
                  "center_weight", "center_step", "momentum_schedule", "learning_rate", "beta1",
                  "beta2", "adam_eps", "epochs", "seed", "use_infonce", "use_center", "use_momentum"});
  TrainConfig& t = c.train;
  maybe(s, "train", "dim", t.dim, read_count);
  if (s.contains("hidden_dims")) {
    const json& h = s["hidden_dims"];
    if (!h.is_array()) bad("train.hidden_dims", "must be an array of widths");
    t.hidden_dims.clear();
    for (const auto& w : h) t.hidden_dims.push_back(read_count(w, "train.hidden_dims"));
  }
  maybe(s, "train", "batch_size", t.batch_size, read_count);
  maybe(s, "train", "queue_size", t.queue_size, read_count);
  maybe(s, "train", "temperature", t.temperature, read_real);
  maybe(s, "train", "margin", t.margin, read_real);
  maybe(s, "train", "center_weight", t.center_weight, read_real);
  maybe(s, "train", "center_step", t.center_step, read_real);
  if (s.contains("momentum_schedule")) {
    const json& m = s["momentum_schedule"];
    if (!m.is_array()) bad("train.momentum_schedule", "must be an array of {from_epoch, momentum}");
    t.momentum_schedule.clear();
    for (const auto& stage : m) {
      if (!stage.is_object()) bad("train.momentum_schedule", "entries must be objects");
      reject_unknown(stage, "train.momentum_schedule[]", {"from_epoch", "momentum"});
      if (!stage.contains("from_epoch") || !stage.contains("momentum")) {
        bad("train.momentum_schedule", "entries need from_epoch and momentum");
      }
      t.momentum_schedule.push_back(
          {read_count(stage["from_epoch"], "train.momentum_schedule.from_epoch"),
           read_real(stage["momentum"], "train.momentum_schedule.momentum")});
    }
  }
  maybe(s, "train", "learning_rate", t.learning_rate, read_real);
  maybe(s, "train", "beta1", t.beta1, read_real);
  maybe(s, "train", "beta2", t.beta2, read_real);
  maybe(s, "train", "adam_eps", t.adam_eps, read_real);
  maybe(s, "train", "epochs", t.epochs, read_count);
  maybe(s, "train", "seed", t.seed, read_count);
  maybe(s, "train", "use_infonce", t.use_infonce, read_bool);
  maybe(s, "train", "use_center", t.use_center, read_bool);
  maybe(s, "train", "use_momentum", t.use_momentum, read_bool);
  c.train_seed_given = s.contains("seed");
}

void parse_eval(const json& s, CliConfig& c) {
  reject_unknown(s, "eval", {"split", "encoder"});
  if (s.contains("split")) {
    if (!s["split"].is_string()) bad("eval.split", "must be a string");
    c.eval_split = s["split"].get<std::string>();
    check_split_name(c.eval_split, "eval.split");
  }
  if (s.contains("encoder")) {
    if (!s["encoder"].is_string()) bad("eval.encoder", "must be a string");
    c.train.eval_encoder = parse_encoder(s["encoder"].get<std::string>(), "eval.encoder");
  }
}

json report_json(const RetrievalReport& r) { return json::parse(r.to_json()); }

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConfig:
    case ErrorCode::kDimensionMismatch:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

template <typename Body>
int guarded(std::ostream& err, Body body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

Dataset load_data(const std::optional<fs::path>& data, const CliConfig& c, std::ostream& err) {
  if (data) return load_dataset(*data);
  if (c.manifest) return load_dataset(*c.manifest);
  err << "no dataset given; generating the synthetic dataset described by the config\n";
  return generate_synthetic(c.synth).dataset;
}

void write_line(std::ostream& log, const json& j) {
  log << j.dump() << "\n";
  if (!log) throw Error(ErrorCode::kIo, "failed writing the training log");
}

}  // namespace

CliConfig parse_config(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
  reject_unknown(root, "", {"data", "train", "eval"});
  CliConfig c;
  if (const json* s = object_section(root, "data")) parse_data(*s, base_dir, c);
  if (const json* s = object_section(root, "train")) parse_train(*s, c);
  if (const json* s = object_section(root, "eval")) parse_eval(*s, c);
  if (!c.manifest) validate(c.synth);
  validate(c.train);
  return c;
}

CliConfig load_config(const fs::path& path) {
  const Bytes raw = read_file(path);
  return parse_config(std::string(raw.begin(), raw.end()), path.parent_path());
}

std::string config_json(const CliConfig& c) {
  json data;
  if (c.manifest) {
    data["manifest"] = c.manifest->generic_string();
  } else {
    const SynthConfig& d = c.synth;
    data = {{"n_videos", d.n_videos},         {"captions_per_video", d.captions_per_video},
            {"latent_dim", d.latent_dim},     {"video_dim", d.video_dim},
            {"text_dim", d.text_dim},         {"noise_std", d.noise_std},
            {"seed", d.seed},                 {"train_videos", d.train_videos},
            {"val_videos", d.val_videos},     {"test_videos", d.test_videos}};
  }
  const TrainConfig& t = c.train;
  json schedule = json::array();
  for (const auto& s : t.momentum_schedule) {
    schedule.push_back({{"from_epoch", s.from_epoch}, {"momentum", s.momentum}});
  }
  json train = {{"dim", t.dim},
                {"hidden_dims", t.hidden_dims},
                {"batch_size", t.batch_size},
                {"queue_size", t.queue_size},
                {"temperature", t.temperature},
                {"margin", t.margin},
                {"center_weight", t.center_weight},
                {"center_step", t.center_step},
                {"momentum_schedule", schedule},
                {"learning_rate", t.learning_rate},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"epochs", t.epochs},
                {"seed", t.seed},
                {"use_infonce", t.use_infonce},
                {"use_center", t.use_center},
                {"use_momentum", t.use_momentum}};
  json eval = {{"split", c.eval_split}, {"encoder", encoder_name(t.eval_encoder)}};
  return json{{"data", data}, {"train", train}, {"eval", eval}}.dump();
}

int cmd_generate(const fs::path& config_path, const fs::path& out_dir, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&] {
    const CliConfig c = config_path.empty() ? parse_config("{}") : load_config(config_path);
    if (!c.data_seed_given) err << "note: data.seed not set; using default " << c.synth.seed << "\n";
    if (c.manifest) bad("data.manifest", "is not allowed for generate; give generator fields instead");
    const Dataset d = generate_synthetic(c.synth).dataset;
    const fs::path manifest = save_dataset(d, out_dir);
    err << "generated " << d.video_count() << " videos and " << d.caption_count()
        << " captions (train " << d.splits.train.size() << ", val " << d.splits.val.size()
        << ", test " << d.splits.test.size() << ") into " << out_dir.string() << "\n";
    out << json{{"manifest", manifest.generic_string()},
                {"videos", d.video_count()},
                {"captions", d.caption_count()},
                {"train", d.splits.train.size()},
                {"val", d.splits.val.size()},
                {"test", d.splits.test.size()}}
               .dump()
        << "\n";
    return kExitOk;
  });
}

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    CliConfig c = o.config.empty() ? parse_config("{}") : load_config(o.config);
    if (o.no_infonce) c.train.use_infonce = false;
    if (o.no_center) c.train.use_center = false;
    if (o.no_momentum) c.train.use_momentum = false;
    if (o.seed) {
      c.train.seed = *o.seed;
      c.train_seed_given = true;
    }
    if (o.epochs) c.train.epochs = *o.epochs;
    validate(c.train);
    if (!c.train_seed_given) err << "note: train.seed not set; using default " << c.train.seed << "\n";
    if (o.checkpoint.empty()) bad("checkpoint", "output path is required");

    const Dataset dataset = load_data(o.data, c, err);
    const fs::path log_path = o.log ? *o.log : fs::path(o.checkpoint.string() + ".log.jsonl");
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw Error(ErrorCode::kIo, "cannot open log file " + log_path.string());
    write_line(log, json{{"config", json::parse(config_json(c))}});

    FitCallbacks callbacks;
    callbacks.on_step = [&](const TrainState& s, const StepReport& r) {
      const auto& l = r.losses;
      write_line(log, json{{"step", s.step},
                           {"epoch", s.epochs_done + 1},
                           {"l_tri", l.l_tri},
                           {"l_v2t", l.l_v2t},
                           {"l_t2v", l.l_t2v},
                           {"l_c", l.l_c},
                           {"total", l.total},
                           {"m", r.momentum}});
    };
    callbacks.on_epoch = [&](const EpochRecord& e) {
      write_line(log, json{{"epoch", e.epoch},
                           {"m", e.momentum},
                           {"l_tri", e.l_tri},
                           {"l_v2t", e.l_v2t},
                           {"l_t2v", e.l_t2v},
                           {"l_c", e.l_c},
                           {"total", e.total},
                           {"validation", report_json(e.validation)}});
      err << "epoch " << e.epoch << "/" << c.train.epochs << "  loss " << e.total
          << "  val rsum " << e.validation.rsum << "\n";
    };
    const FitResult result = fit(dataset, c.train, callbacks);
    save_checkpoint(result.best_state, o.checkpoint);
    const RetrievalReport& best = result.history.at(result.best_epoch - 1).validation;
    write_line(log, json{{"best_epoch", result.best_epoch}, {"validation", report_json(best)}});
    log.close();
    err << "best epoch " << result.best_epoch << " (val rsum " << best.rsum << "); checkpoint "
        << o.checkpoint.string() << "\n";
    out << best.to_json() << "\n";
    return kExitOk;
  });
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    CliConfig c = o.config ? load_config(*o.config) : parse_config("{}");
    if (o.encoder) c.train.eval_encoder = parse_encoder(*o.encoder, "encoder");
    if (o.split) {
      check_split_name(*o.split, "split");
      c.eval_split = *o.split;
    }
    const TrainState state = load_checkpoint(o.checkpoint);
    const Dataset dataset = load_dataset(o.data);
    const auto& ids = c.eval_split == "train" ? dataset.splits.train
                      : c.eval_split == "val" ? dataset.splits.val
                                              : dataset.splits.test;
    if (ids.empty()) bad("split", "'" + c.eval_split + "' is empty in this dataset");
    const RetrievalReport r = evaluate(state, dataset, ids, c.train.eval_encoder);
    err << "evaluated " << ids.size() << " " << c.eval_split << " videos with the "
        << encoder_name(c.train.eval_encoder) << " encoders: rsum " << r.rsum << "\n";
    out << r.to_json() << "\n";
    return kExitOk;
  });
}

}  // namespace meel::cli
