#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "config.hpp"
#include "gradcheck.hpp"
#include "gramtex/binio.hpp"
#include "gramtex/error.hpp"
#include "gramtex/image.hpp"
#include "gramtex/quilting.hpp"
#include "gramtex/textures.hpp"

namespace gramtex::cli {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& common) {
  app->add_option("--config", common.config, "key=value job file");
  app->add_option("--set", common.sets, "override one config key (key=value)");
}

JobConfig resolve_config(const Common& common) {
  JobConfig c = common.config.empty() ? JobConfig{} : JobConfig::load(common.config);
  for (const auto& s : common.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Parse, "--set expects key=value");
    c.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return c;
}

Tensor load_image(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(ErrorCode::InvalidArgument, what + " image not given");
  if (!fs::exists(path)) throw Error(ErrorCode::Io, what + " image " + path + " does not exist");
  return read_png(path);
}

Network load_network(const JobConfig& c) {
  return c.network.empty() ? tex_net_small(c.network_seed) : load_weights(c.network);
}

void write_trace(const OptTrace& trace, const std::string& path) {
  if (path.empty()) return;
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
  trace.write_csv(os, true);
}

/// Snapshots go next to the output as <stem>_iterNNNN.png.
void attach_snapshots(SynthesisJob& job, std::size_t every, const std::string& out) {
  if (every == 0) return;
  const fs::path base(out);
  job.on_iterate = [every, base](std::size_t iter, const Tensor& x) {
    if (iter % every != 0) return;
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "_iter%04zu.png", iter);
    write_png(x, base.parent_path() / (base.stem().string() + suffix));
  };
}

struct SynthFlags {
  std::string out, trace, init, source;
  std::size_t iterations = 0;
  bool has_iterations = false;
};

void prepare_job(JobConfig& c, const SynthFlags& f) {
  if (!f.init.empty()) c.job.init = parse_init_mode(f.init);
  if (f.has_iterations) c.job.iterations = f.iterations;
  if (!c.init_path.empty()) c.job.init_image = load_image(c.init_path, "init");
  attach_snapshots(c.job, c.snapshot_every, f.out);
}

void finish(const SynthesisResult& r, const SynthFlags& f, std::ostream& out) {
  write_png(r.image, f.out);
  write_trace(r.trace, f.trace);
  out << "wrote " << f.out << " (" << r.trace.iterations() << " iterations, objective "
      << format_double(r.trace.objective.front()) << " -> "
      << format_double(r.trace.objective.back()) << ", " << r.trace.stop_reason << ")\n";
}

void add_synth_flags(CLI::App* app, SynthFlags& f) {
  app->add_option("--out", f.out, "output PNG")->required();
  app->add_option("--trace", f.trace, "trace CSV (iter,objective,grad_norm,seconds)");
  app->add_option("--init", f.init, "rand|quilt|image");
  app->add_option_function<std::size_t>(
      "--iterations",
      [&f](std::size_t n) {
        f.iterations = n;
        f.has_iterations = true;
      },
      "L-BFGS iterations");
}

std::size_t class_index(const ClassifierSet& set, const std::string& name) {
  if (set.empty()) throw Error(ErrorCode::InvalidArgument, "classifier bundle is empty");
  const LinearClassifier& first = set.begin()->second;
  const std::size_t k = first.label_index(name);
  if (k == first.classes()) {
    std::string known;
    for (const auto& l : first.labels) known += (known.empty() ? "" : ", ") + l;
    throw Error(ErrorCode::InvalidArgument, "unknown class \"" + name + "\" (known: " + known + ")");
  }
  return k;
}

LabeledImages load_dataset_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) classes.push_back(e.path());
  }
  std::sort(classes.begin(), classes.end());
  LabeledImages data;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(classes[k])) {
      if (e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    data.class_names.push_back(classes[k].filename().string());
    for (const auto& f : files) {
      data.images.push_back(read_png(f));
      data.labels.push_back(k);
    }
  }
  if (data.class_names.size() < 2 || data.images.empty()) {
    throw Error(ErrorCode::InvalidArgument, dir.string() + " needs at least two class folders");
  }
  return data;
}

/// Every fifth image (per directory order) goes to validation.
std::pair<LabeledImages, LabeledImages> split_dataset(const LabeledImages& all) {
  LabeledImages train, val;
  train.class_names = val.class_names = all.class_names;
  for (std::size_t i = 0; i < all.size(); ++i) {
    LabeledImages& dst = i % 5 == 4 ? val : train;
    dst.images.push_back(all.images[i]);
    dst.labels.push_back(all.labels[i]);
  }
  return {train, val};
}

std::pair<LabeledImages, LabeledImages> synthetic_split(const JobConfig& c) {
  SyntheticSpec tr = c.data;
  tr.seed = CounterRng(c.job.seed).split("train-data").next_u64();
  SyntheticSpec va = c.data;
  va.seed = CounterRng(c.job.seed).split("validation-data").next_u64();
  va.per_class = c.validation_per_class;
  return {make_synthetic_dataset(tr), make_synthetic_dataset(va)};
}

int map_error(const Error& e, std::ostream& err) {
  err << "error: " << e.what() << '\n';
  return e.code() == ErrorCode::NonFinite ? kExitFailure : kExitUsage;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"gramtex: Gram-feature texture synthesis, inversion and quilting"};
  app.require_subcommand(1);

  Common common;
  SynthFlags sf;
  std::function<int()> action;

  // synth
  auto* synth = app.add_subcommand("synth", "texture synthesis from a source image");
  add_common(synth, common);
  add_synth_flags(synth, sf);
  synth->add_option("--source", sf.source, "source texture PNG");
  synth->callback([&] {
    action = [&] {
      JobConfig c = resolve_config(common);
      if (!sf.source.empty()) c.source = sf.source;
      const Tensor source = load_image(c.source, "source");
      prepare_job(c, sf);
      finish(synthesize_texture(load_network(c), source, c.job), sf, out);
      return kExitOk;
    };
  });

  // transfer
  std::string content_path, style_path;
  double lambda = -1.0;
  auto* transfer = app.add_subcommand("transfer", "style transfer");
  add_common(transfer, common);
  add_synth_flags(transfer, sf);
  transfer->add_option("--content", content_path, "content PNG");
  transfer->add_option("--style", style_path, "style PNG");
  transfer->add_option("--lambda", lambda, "content weight");
  transfer->callback([&] {
    action = [&] {
      JobConfig c = resolve_config(common);
      if (!content_path.empty()) c.content = content_path;
      if (!style_path.empty()) c.style = style_path;
      if (lambda >= 0.0) c.job.content_weight = lambda;
      const Tensor content = load_image(c.content, "content");
      const Tensor style = load_image(c.style, "style");
      prepare_job(c, sf);
      finish(style_transfer(load_network(c), content, style, c.job), sf, out);
      return kExitOk;
    };
  });

  // invert
  std::string classifier_path, class_name;
  double beta = -1.0;
  auto* invert = app.add_subcommand("invert", "category inversion");
  add_common(invert, common);
  add_synth_flags(invert, sf);
  invert->add_option("--classifiers", classifier_path, "GMC1 classifier bundle");
  invert->add_option("--class", class_name, "target class name")->required();
  invert->add_option("--beta", beta, "class term weight");
  invert->add_option("--source", sf.source, "optional image for init statistics");
  invert->callback([&] {
    action = [&] {
      JobConfig c = resolve_config(common);
      if (!classifier_path.empty()) c.classifiers = classifier_path;
      if (!sf.source.empty()) c.source = sf.source;
      if (beta >= 0.0) c.job.class_weight = beta;
      if (c.classifiers.empty()) throw Error(ErrorCode::InvalidArgument, "no classifier bundle");
      if (!fs::exists(c.classifiers)) throw Error(ErrorCode::Io, c.classifiers + " does not exist");
      const ClassifierSet set = load_classifiers(c.classifiers);
      const std::size_t k = class_index(set, class_name);
      const Tensor source = c.source.empty() ? Tensor{} : load_image(c.source, "source");
      prepare_job(c, sf);
      finish(invert_category(load_network(c), set, k, c.job, source), sf, out);
      return kExitOk;
    };
  });

  // edit
  std::vector<std::string> attrs;
  std::string mode;
  auto* edit = app.add_subcommand("edit", "attribute-driven editing");
  add_common(edit, common);
  add_synth_flags(edit, sf);
  edit->add_option("--source", sf.source, "image to edit");
  edit->add_option("--classifiers", classifier_path, "GMC1 classifier bundle");
  edit->add_option("--attr", attrs, "class:weight (repeatable)");
  edit->add_option("--mode", mode, "texture|content");
  edit->callback([&] {
    action = [&] {
      JobConfig c = resolve_config(common);
      if (!sf.source.empty()) c.source = sf.source;
      if (!classifier_path.empty()) c.classifiers = classifier_path;
      if (!mode.empty()) c.edit_mode = parse_edit_mode(mode);
      if (!attrs.empty()) {
        std::string joined;
        for (const auto& a : attrs) joined += (joined.empty() ? "" : ",") + a;
        c.set("attributes", joined);
      }
      if (c.classifiers.empty()) throw Error(ErrorCode::InvalidArgument, "no classifier bundle");
      if (!fs::exists(c.classifiers)) throw Error(ErrorCode::Io, c.classifiers + " does not exist");
      const ClassifierSet set = load_classifiers(c.classifiers);
      std::vector<AttributeTarget> targets;
      for (const auto& [name, w] : c.attributes) targets.push_back({class_index(set, name), w});
      const Tensor source = load_image(c.source, "source");
      prepare_job(c, sf);
      const SynthesisResult r =
          edit_with_attribute(load_network(c), set, source, targets, c.edit_mode, c.job);
      finish(r, sf, out);
      return kExitOk;
    };
  });

  // quilt
  std::string quilt_log, correspondence;
  double alpha = 1.0;
  auto* quilt_cmd = app.add_subcommand("quilt", "image quilting");
  add_common(quilt_cmd, common);
  quilt_cmd->add_option("--source", sf.source, "source texture PNG");
  quilt_cmd->add_option("--out", sf.out, "output PNG")->required();
  quilt_cmd->add_option("--log", quilt_log, "placement CSV with seam and straight-cut costs");
  quilt_cmd->add_option("--correspondence", correspondence, "target image for transfer quilting");
  quilt_cmd->add_option("--alpha", alpha, "overlap vs correspondence weight in [0, 1]");
  quilt_cmd->callback([&] {
    action = [&] {
      JobConfig c = resolve_config(common);
      if (!sf.source.empty()) c.source = sf.source;
      const Tensor source = load_image(c.source, "source");
      QuiltParams qp = c.job.quilt;
      qp.out_h = c.job.out_h;
      qp.out_w = c.job.out_w;
      qp.seed = CounterRng(c.job.seed).split("quilt").next_u64();
      QuiltLog log;
      const Tensor result =
          correspondence.empty()
              ? quilt(source, qp, &log)
              : quilt_transfer(source, resize_bilinear(load_image(correspondence, "correspondence"),
                                                       qp.out_h, qp.out_w),
                               qp, alpha, &log);
      write_png(result, sf.out);
      if (!quilt_log.empty()) {
        std::ofstream os(quilt_log);
        if (!os) throw Error(ErrorCode::Io, "cannot write " + quilt_log);
        os << "placement,row,col,src_row,src_col,left_seam_cost,left_straight_cost,"
              "top_seam_cost,top_straight_cost\n";
        for (std::size_t i = 0; i < log.placements.size(); ++i) {
          const QuiltPlacement& p = log.placements[i];
          os << i << ',' << p.row << ',' << p.col << ',' << p.source.row << ',' << p.source.col
             << ',' << format_double(p.left_seam_cost) << ',' << format_double(p.left_straight_cost)
             << ',' << format_double(p.top_seam_cost) << ',' << format_double(p.top_straight_cost)
             << '\n';
        }
      }
      out << "wrote " << sf.out << " (" << log.placements.size() << " patches)\n";
      return kExitOk;
    };
  });

  // train
  std::string head_name, jitter_name, dataset_dir, model_out, csv_out, network_out;
  std::uint64_t seed = 0;
  bool has_seed = false;
  auto* train = app.add_subcommand("train", "train a head (bilinear|fc) or layer SVMs (svm)");
  add_common(train, common);
  train->add_option("--head", head_name, "bilinear|fc|svm");
  train->add_option("--jitter", jitter_name, "f1|f5|f25");
  train->add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { seed = s; has_seed = true; }, "run seed");
  train->add_option("--dataset", dataset_dir, "folder of class subfolders of PNGs");
  train->add_option("--out", model_out, "model file")->required();
  train->add_option("--csv", csv_out, "per-epoch validation error (heads) or accuracy (svm)");
  train->add_option("--network-out", network_out, "write the trained network weights");
  train->callback([&] {
    action = [&] {
      JobConfig c = resolve_config(common);
      if (has_seed) c.job.seed = seed;
      const bool svm = head_name == "svm";
      if (!head_name.empty() && !svm) c.head.head = parse_head(head_name);
      if (!jitter_name.empty()) c.head.jitter.level = parse_jitter(jitter_name);
      auto [tr, va] = dataset_dir.empty() ? synthetic_split(c)
                                          : split_dataset(load_dataset_dir(dataset_dir));
      std::ofstream csv;
      if (!csv_out.empty()) {
        csv.open(csv_out);
        if (!csv) throw Error(ErrorCode::Io, "cannot write " + csv_out);
      }
      if (svm) {
        const Network net = load_network(c);
        std::vector<std::string> layers;
        for (const auto& l : c.job.class_layers) layers.push_back(net.resolve(l));
        SvmOptions so = c.svm;
        so.seed = c.job.seed;
        const ClassifierSet set = train_layer_classifiers(net, tr, layers, so);
        save_classifiers(set, model_out);
        if (!network_out.empty()) save_weights(net, network_out);
        if (csv) csv << "layer,train_accuracy,validation_accuracy\n";
        for (const auto& [layer, m] : set) {
          auto accuracy = [&](const LabeledImages& d) {
            std::size_t ok = 0;
            for (std::size_t i = 0; i < d.size(); ++i) {
              ok += predict(m, gram_descriptor(net, d.images[i], layer)).label == d.labels[i];
            }
            return d.size() ? static_cast<double>(ok) / static_cast<double>(d.size()) : 0.0;
          };
          const double a_tr = accuracy(tr), a_va = accuracy(va);
          if (csv) csv << layer << ',' << format_double(a_tr) << ',' << format_double(a_va) << '\n';
          out << layer << ": train accuracy " << a_tr << ", validation accuracy " << a_va << '\n';
        }
        return kExitOk;
      }
      HeadTrainOptions ho = c.head;
      ho.seed = c.job.seed;
      const HeadTrainResult r = train_head_scratch(tr, va, ho);
      save_head(r.head, model_out);
      if (!network_out.empty()) save_weights(r.network, network_out);
      if (csv) {
        csv << "epoch,val_error\n";
        for (std::size_t e = 0; e < r.validation_history.size(); ++e) {
          csv << e + 1 << ',' << format_double(r.validation_history[e]) << '\n';
        }
      }
      out << to_string(ho.head) << '/' << to_string(ho.jitter.level) << ": validation error "
          << r.validation_error << " after " << r.epochs_run << " epochs\n";
      return kExitOk;
    };
  });

  // sweep
  std::size_t sweep_seeds = 5;
  auto* sweep = app.add_subcommand("sweep", "jitter sweep over heads and jitter levels");
  add_common(sweep, common);
  sweep->add_option("--seeds", sweep_seeds, "number of seeds (seed, seed+1, ...)");
  sweep->add_option("--csv", csv_out, "error table (head,jitter,seed,val_error)")->required();
  sweep->callback([&] {
    action = [&] {
      JobConfig c = resolve_config(common);
      SweepOptions so;
      so.base = c.head;
      so.data = c.data;
      so.validation_per_class = c.validation_per_class;
      for (std::size_t i = 0; i < sweep_seeds; ++i) so.seeds.push_back(c.job.seed + i);
      const SweepResult r = jitter_sweep(so);
      std::ofstream os(csv_out);
      if (!os) throw Error(ErrorCode::Io, "cannot write " + csv_out);
      r.write_csv(os);
      for (const auto& s : r.summary) {
        out << to_string(s.head) << '/' << to_string(s.jitter) << ": mean " << s.mean << " sd "
            << s.stddev << '\n';
      }
      return kExitOk;
    };
  });

  // gradcheck
  std::string module = "all";
  double corrupt = 0.0;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  gradcheck->add_option("--module", module, "all or one of the module names");
  gradcheck->add_option("--seed", seed, "instance seed");
  gradcheck->add_option("--corrupt", corrupt, "scale analytic gradients by 1+x (self-test)")
      ->group("");
  gradcheck->callback([&] {
    action = [&] {
      const auto results = run_gradcheck(module, seed, corrupt);
      bool ok = true;
      for (const auto& r : results) {
        ok = ok && r.passed;
        out << (r.passed ? "PASS " : "FAIL ") << r.module << ": " << r.name << " max rel error "
            << r.max_rel_error << " over " << r.checked << " coordinates";
        if (!r.passed) {
          out << " (worst index " << r.worst_index << ": analytic " << r.analytic << ", numeric "
              << r.numeric << ")";
        }
        out << '\n';
      }
      return ok ? kExitOk : kExitFailure;
    };
  });

  // render
  std::string kind = "stripes";
  std::size_t size = 48;
  auto* render = app.add_subcommand("render", "procedural reference texture");
  render->add_option("--kind", kind, "stripes|dots|checker|blobs|bricks|weave");
  render->add_option("--size", size, "width and height");
  render->add_option("--seed", seed, "texture seed");
  render->add_option("--out", model_out, "output PNG")->required();
  render->callback([&] {
    action = [&] {
      CounterRng rng(seed);
      write_png(render_texture(parse_texture_kind(kind), size, size, rng), model_out);
      return kExitOk;
    };
  });

  // init-net
  auto* init_net = app.add_subcommand("init-net", "write tex-net-small weights");
  init_net->add_option("--seed", seed, "initialization seed");
  init_net->add_option("--out", model_out, "weight file")->required();
  init_net->callback([&] {
    action = [&] {
      save_weights(tex_net_small(seed), model_out);
      return kExitOk;
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return action ? action() : kExitUsage;
  } catch (const Error& e) {
    return map_error(e, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace gramtex::cli
