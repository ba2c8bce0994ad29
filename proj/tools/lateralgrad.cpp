// lateralgrad: experiment CLI for lateral-inhibition gradient-mask training
// and its diagnostics. Subcommands share a flat key=value option space; the
// same keys work from a config file (--config) or as --key value flags, and
// flags win on conflict.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "lateralgrad/augment.hpp"
#include "lateralgrad/autograd.hpp"
#include "lateralgrad/checkpoint.hpp"
#include "lateralgrad/csv.hpp"
#include "lateralgrad/datasets.hpp"
#include "lateralgrad/diagnostics.hpp"
#include "lateralgrad/errors.hpp"
#include "lateralgrad/hash.hpp"
#include "lateralgrad/image_io.hpp"
#include "lateralgrad/log_inhibition.hpp"
#include "lateralgrad/manifest.hpp"
#include "lateralgrad/model.hpp"
#include "lateralgrad/options.hpp"
#include "lateralgrad/robustness.hpp"
#include "lateralgrad/saliency.hpp"
#include "lateralgrad/training.hpp"

namespace fs = std::filesystem;
using namespace lateralgrad;

namespace {

constexpr uint64_t kShuffleStream = 0x9E3779B97F4A7C15ull;

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

void define_common(OptionSet& opt) {
  opt.define("out-dir", "out", "directory for artifacts and the run manifest");
  opt.define("seed", "1", "run seed");
  opt.define("dataset", "synthetic_boxes", "mnist_idx | cifar10_bin | synthetic_boxes");
  opt.define("data-path", "", "dataset directory for mnist_idx / cifar10_bin");
  opt.define("train-limit", "0", "use only the first N training images (0 = all)");
  opt.define("test-limit", "0", "use only the first N test images (0 = all)");
  opt.define("synthetic.n", "2048", "synthetic_boxes training images");
  opt.define("synthetic.test-n", "512", "synthetic_boxes test images");
}

void define_mask(OptionSet& opt) {
  opt.define("mask", "false", "train with the gradient mask");
  opt.define("mask.quantile", "0.5", "inhibition rate q in [0,1]");
  opt.define("mask.sigma", "11", "LoG sigma");
  opt.define("mask.kernel-size", "0", "LoG taps (odd); 0 derives from sigma, capped to the map");
  opt.define("mask.k", "0", "channel sets per layer; 0 = largest divisor of C up to 16");
  opt.define("mask.layers", "default",
             "default | all | first | comma-separated layer ids to mask");
  opt.define("mask.mode", "quantile", "quantile | epsilon thresholding");
  opt.define("mask.epsilon", "0", "threshold for epsilon mode");
  opt.define("mask.scope", "per-sample", "per-sample | per-batch mask computation");
  opt.define("ablation", "none", "none | without-li | without-minicolumn");
}

struct LoadedDataset {
  DatasetHandle handle;
  std::vector<std::string> input_files;
};

LoadedDataset load_dataset(const OptionSet& opt) {
  LoadedDataset out;
  const std::string kind = opt.str("dataset");
  const std::string path = opt.str("data-path");
  if (kind == "mnist_idx") {
    if (path.empty()) throw ConfigError("mnist_idx needs --data-path");
    out.handle = load_mnist_idx(path);
    for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"})
      out.input_files.push_back((fs::path(path) / f).string());
  } else if (kind == "cifar10_bin") {
    if (path.empty()) throw ConfigError("cifar10_bin needs --data-path");
    out.handle = load_cifar10_dir(path);
    for (int i = 1; i <= 5; ++i) {
      const fs::path p = fs::path(path) / ("data_batch_" + std::to_string(i) + ".bin");
      if (fs::exists(p)) out.input_files.push_back(p.string());
    }
  } else if (kind == "synthetic_boxes") {
    out.handle = make_synthetic_boxes(opt.integer("synthetic.n"), opt.integer("synthetic.test-n"),
                                      static_cast<uint64_t>(opt.integer("seed")));
  } else {
    throw ConfigError("unknown dataset kind '" + kind +
                      "' (mnist_idx | cifar10_bin | synthetic_boxes)");
  }

  auto limit_split = [](LabeledData& d, std::vector<BBox>* boxes, int64_t limit) {
    if (limit <= 0 || d.size() <= limit) return;
    std::vector<int64_t> shape = d.images.shape();
    shape[0] = limit;
    const int64_t per = d.images.numel() / d.images.dim(0);
    Tensor imgs(shape);
    std::copy(d.images.data(), d.images.data() + limit * per, imgs.data());
    d.images = std::move(imgs);
    d.labels.resize(static_cast<size_t>(limit));
    if (boxes && static_cast<int64_t>(boxes->size()) > limit)
      boxes->resize(static_cast<size_t>(limit));
  };
  limit_split(out.handle.train, &out.handle.train_boxes, opt.integer("train-limit"));
  limit_split(out.handle.test, &out.handle.test_boxes, opt.integer("test-limit"));
  return out;
}

Model build_arch(const std::string& arch, const std::array<int64_t, 3>& input, int64_t classes,
                 Rng& rng) {
  ModelBuilder b(input[0], input[1], input[2]);
  if (arch == "c2") {
    b.conv2d(8, 3, 1, 1).relu().maxpool(2).conv2d(16, 3, 1, 1).relu().maxpool(2).flatten().linear(
        classes);
  } else if (arch == "c3") {
    b.conv2d(8, 3, 1, 1)
        .relu()
        .maxpool(2)
        .conv2d(16, 3, 1, 1)
        .relu()
        .maxpool(2)
        .conv2d(32, 3, 1, 1)
        .relu()
        .maxpool(2)
        .flatten()
        .linear(classes);
  } else {
    throw ConfigError("unknown arch '" + arch + "' (c2 | c3)");
  }
  return b.build(rng);
}

std::vector<int> parse_mask_layers(const std::string& value, const Model& model) {
  if (value == "default") return model.default_masked_layers();
  if (value == "all") return model.conv_block_outputs();
  if (value == "first") {
    auto blocks = model.conv_block_outputs();
    if (blocks.empty()) throw ConfigError("model has no conv blocks to mask");
    return {blocks.front()};
  }
  std::vector<int> ids;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) ids.push_back(std::stoi(item));
  return ids;
}

int64_t auto_num_sets(const Model& model, const std::vector<int>& layer_ids) {
  int64_t g = 0;
  for (int id : layer_ids) g = std::gcd(g, model.output_shapes[static_cast<size_t>(id)][0]);
  if (g == 0) return 1;
  for (int64_t k = std::min<int64_t>(16, g); k >= 1; --k)
    if (g % k == 0) return k;
  return 1;
}

bool mask_requested(const OptionSet& opt) {
  if (opt.flag("mask")) return true;
  for (const char* key : {"mask.quantile", "mask.sigma", "mask.kernel-size", "mask.k",
                          "mask.layers", "mask.mode", "mask.epsilon"})
    if (opt.was_set(key)) return true;
  return false;
}

MaskConfig mask_config_from_options(const OptionSet& opt, const Model& model) {
  MaskConfig cfg;
  cfg.quantile = opt.num("mask.quantile");
  cfg.sigma = opt.num("mask.sigma");
  cfg.kernel_size = opt.integer("mask.kernel-size");
  cfg.layer_ids = parse_mask_layers(opt.str("mask.layers"), model);
  if (cfg.layer_ids.empty())
    throw ConfigError("mask requested but the layer set is empty; this model has too few conv "
                      "blocks for the default placement, use --mask.layers first|all|<ids>");
  cfg.num_sets = opt.integer("mask.k");
  if (cfg.num_sets == 0) cfg.num_sets = auto_num_sets(model, cfg.layer_ids);
  const std::string mode = opt.str("mask.mode");
  if (mode == "quantile") cfg.mode = ThresholdMode::Quantile;
  else if (mode == "epsilon") cfg.mode = ThresholdMode::Epsilon;
  else throw ConfigError("mask.mode must be quantile or epsilon");
  cfg.epsilon = opt.num("mask.epsilon");
  return cfg;
}

AblationMode ablation_from_options(const OptionSet& opt) {
  const std::string a = opt.str("ablation");
  if (a == "none") return AblationMode::None;
  if (a == "without-li") return AblationMode::WithoutLi;
  if (a == "without-minicolumn") return AblationMode::WithoutMinicolumn;
  throw ConfigError("ablation must be none | without-li | without-minicolumn");
}

void write_train_artifacts(const std::string& out_dir, const TrainLog& log, bool masked,
                           Manifest& manifest) {
  CsvWriter train_csv({"epoch", "train_loss", "train_acc", "val_acc"});
  for (const auto& row : log.epochs)
    train_csv.add_row({csv_format(row.epoch), csv_format(row.train_loss),
                       csv_format(row.train_acc), csv_format(row.val_acc)});
  const std::string train_path = (fs::path(out_dir) / "train_log.csv").string();
  train_csv.write(train_path);
  manifest.add_artifact(train_path);
  for (const auto& row : log.epochs)
    manifest.add("timing.epoch_seconds." + std::to_string(row.epoch), csv_format(row.wall_seconds));

  if (masked) {
    CsvWriter mask_csv({"epoch", "layer", "mean_inhibited_fraction"});
    for (const auto& row : log.mask_stats)
      mask_csv.add_row({csv_format(row.epoch), csv_format(static_cast<int64_t>(row.layer_id)),
                        csv_format(row.mean_inhibited_fraction)});
    const std::string mask_path = (fs::path(out_dir) / "mask_stats.csv").string();
    mask_csv.write(mask_path);
    manifest.add_artifact(mask_path);
  }

  if (!log.gsnr.empty()) {
    CsvWriter gsnr_csv({"epoch", "layer", "mean_gsnr", "p50", "p90"});
    for (const auto& row : log.gsnr)
      gsnr_csv.add_row({csv_format(row.epoch), row.layer, csv_format(row.mean_gsnr),
                        csv_format(row.p50), csv_format(row.p90)});
    const std::string gsnr_path = (fs::path(out_dir) / "gsnr.csv").string();
    gsnr_csv.write(gsnr_path);
    manifest.add_artifact(gsnr_path);
  }
}

Checkpoint load_checkpoint_input(const OptionSet& opt, Manifest& manifest,
                                 const std::string& key = "checkpoint") {
  const std::string path = opt.str(key);
  if (path.empty()) throw ConfigError("--" + key + " is required");
  manifest.add_input_file(key, path);
  return load_checkpoint(path);
}

LabeledData normalized_split(const LabeledData& split, const Checkpoint& cp) {
  LabeledData out;
  out.images = normalize_images(split.images, cp.norm_mean, cp.norm_std);
  out.labels = split.labels;
  return out;
}

void finish_manifest(Manifest& manifest, const OptionSet& opt, const std::string& out_dir) {
  manifest.add_config(opt.resolved());
  if (!opt.config_path().empty()) manifest.add_input_file("config", opt.config_path());
  manifest.write((fs::path(out_dir) / "manifest.txt").string());
}

// ---- subcommands ------------------------------------------------------------

int cmd_train(OptionSet& opt) {
  const std::string out_dir = opt.str("out-dir");
  fs::create_directories(out_dir);
  Manifest manifest("train");

  LoadedDataset ds = load_dataset(opt);
  for (const std::string& f : ds.input_files)
    manifest.add_input_file(fs::path(f).filename().string(), f);
  ds.handle.compute_normalization();

  LabeledData train_split{normalize_images(ds.handle.train.images, ds.handle.mean, ds.handle.stddev),
                          ds.handle.train.labels};
  LabeledData val_split;
  if (ds.handle.test.size() > 0)
    val_split = LabeledData{
        normalize_images(ds.handle.test.images, ds.handle.mean, ds.handle.stddev),
        ds.handle.test.labels};

  const uint64_t seed = static_cast<uint64_t>(opt.integer("seed"));
  Checkpoint cp;
  Rng shuffle_rng(seed ^ kShuffleStream);
  int64_t first_epoch = 0;

  const std::string resume = opt.str("resume");
  if (!resume.empty()) {
    manifest.add_input_file("resume", resume);
    cp = load_checkpoint(resume);
    shuffle_rng.deserialize(cp.rng_state);
    first_epoch = cp.epochs_completed;
  } else {
    Rng init_rng(seed);
    cp.model = build_arch(opt.str("arch"),
                          {train_split.images.dim(1), train_split.images.dim(2),
                           train_split.images.dim(3)},
                          ds.handle.num_classes, init_rng);
    cp.norm_mean = ds.handle.mean;
    cp.norm_std = ds.handle.stddev;
    cp.clip_min = ds.handle.clip_min();
    cp.clip_max = ds.handle.clip_max();
  }

  TrainConfig cfg;
  cfg.epochs = opt.integer("epochs");
  cfg.batch_size = opt.integer("batch-size");
  cfg.lr = opt.num("lr");
  cfg.momentum = opt.num("momentum");
  cfg.weight_decay = opt.num("weight-decay");
  cfg.seed = seed;
  cfg.gsnr_every = opt.integer("gsnr.every");
  cfg.ablation = ablation_from_options(opt);
  const std::string scope = opt.str("mask.scope");
  if (scope == "per-sample") cfg.mask_scope = MaskScope::PerSample;
  else if (scope == "per-batch") cfg.mask_scope = MaskScope::PerBatch;
  else throw ConfigError("mask.scope must be per-sample or per-batch");

  const bool masked = mask_requested(opt);
  if (masked) {
    cfg.mask = resolve_mask_config(cp.model, mask_config_from_options(opt, cp.model));
    cp.model.masked_layer_ids = cfg.mask->layer_ids;
    cp.mask = cfg.mask;
    cp.ablation = cfg.ablation;
    cp.mask_scope = cfg.mask_scope;
  }

  SgdOptimizer optim(cfg.lr, cfg.momentum, cfg.weight_decay);
  if (!resume.empty()) optim.velocity() = cp.velocity;

  TrainLog log = train(cp.model, train_split, val_split, cfg, optim, shuffle_rng, first_epoch);

  for (const auto& row : log.epochs)
    std::cout << "epoch " << row.epoch << " loss " << row.train_loss << " train_acc "
              << row.train_acc << " val_acc " << row.val_acc << " (" << row.wall_seconds
              << "s)\n";

  cp.velocity = optim.velocity();
  cp.rng_state = shuffle_rng.serialize();
  cp.epochs_completed = first_epoch + cfg.epochs;
  const std::string cp_path = (fs::path(out_dir) / "checkpoint.bin").string();
  save_checkpoint(cp_path, cp);
  manifest.add_artifact(cp_path);

  write_train_artifacts(out_dir, log, masked, manifest);
  finish_manifest(manifest, opt, out_dir);
  return 0;
}

int cmd_eval(OptionSet& opt) {
  const std::string out_dir = opt.str("out-dir");
  fs::create_directories(out_dir);
  Manifest manifest("eval");
  Checkpoint cp = load_checkpoint_input(opt, manifest);
  LoadedDataset ds = load_dataset(opt);
  for (const std::string& f : ds.input_files)
    manifest.add_input_file(fs::path(f).filename().string(), f);

  CsvWriter csv({"split", "n", "loss", "accuracy"});
  for (const auto& [name, split] :
       {std::pair<std::string, const LabeledData*>{"train", &ds.handle.train},
        std::pair<std::string, const LabeledData*>{"test", &ds.handle.test}}) {
    if (split->size() == 0) continue;
    EvalResult r = evaluate(cp.model, normalized_split(*split, cp));
    csv.add_row({name, csv_format(r.n), csv_format(r.loss), csv_format(r.accuracy)});
    std::cout << name << ": n=" << r.n << " loss=" << r.loss << " acc=" << r.accuracy << "\n";
  }
  const std::string path = (fs::path(out_dir) / "eval.csv").string();
  csv.write(path);
  manifest.add_artifact(path);
  finish_manifest(manifest, opt, out_dir);
  return 0;
}

int cmd_saliency(OptionSet& opt) {
  const std::string out_dir = opt.str("out-dir");
  fs::create_directories(out_dir);
  Manifest manifest("saliency");
  Checkpoint cp = load_checkpoint_input(opt, manifest);
  LoadedDataset ds = load_dataset(opt);
  for (const std::string& f : ds.input_files)
    manifest.add_input_file(fs::path(f).filename().string(), f);

  const LabeledData& raw = ds.handle.test.size() > 0 ? ds.handle.test : ds.handle.train;
  const std::vector<BBox>& boxes =
      ds.handle.test.size() > 0 ? ds.handle.test_boxes : ds.handle.train_boxes;
  const int64_t count = std::min<int64_t>(opt.integer("count"), raw.size());
  if (count < 1) throw ConfigError("no images to explain");

  LabeledData norm = normalized_split(raw, cp);
  LiMapOptions li;
  li.sigma = opt.num("saliency.sigma");
  li.kernel_size = opt.integer("saliency.kernel-size");
  li.rectify = opt.flag("rectify");
  const double top_fraction = opt.num("top-fraction");
  const bool use_pred = opt.str("target") == "pred";

  CsvWriter csv({"image_id", "x_min", "y_min", "x_max", "y_max", "iou"});
  double iou_sum = 0.0;
  int64_t iou_n = 0;
  for (int64_t i = 0; i < count; ++i) {
    Tensor input = slice_leading(norm.images, i);
    int target = norm.labels[static_cast<size_t>(i)];
    if (use_pred) {
      Tape probe = forward(cp.model, input);
      target = argmax_rows(probe.output())[0];
    }
    SaliencyMap map = li_map(cp.model, input, target, li);
    map.model_id = opt.str("checkpoint");
    char name[64];
    std::snprintf(name, sizeof(name), "heatmap_%04d.pgm", static_cast<int>(i));
    const std::string pgm = (fs::path(out_dir) / name).string();
    write_pgm(pgm, map.F);
    manifest.add_artifact(pgm);

    BBox box = saliency_bbox(map, top_fraction);
    double score = -1.0;
    if (static_cast<size_t>(i) < boxes.size()) {
      score = iou(box, boxes[static_cast<size_t>(i)]);
      iou_sum += score;
      ++iou_n;
    }
    csv.add_row({csv_format(i), csv_format(box.x_min), csv_format(box.y_min),
                 csv_format(box.x_max), csv_format(box.y_max), csv_format(score)});
  }
  const std::string path = (fs::path(out_dir) / "saliency_bboxes.csv").string();
  csv.write(path);
  manifest.add_artifact(path);
  if (iou_n > 0) {
    std::cout << "mean IoU over " << iou_n << " boxed images: " << iou_sum / static_cast<double>(iou_n)
              << "\n";
    manifest.add("result.mean_iou", csv_format(iou_sum / static_cast<double>(iou_n)));
  }
  finish_manifest(manifest, opt, out_dir);
  return 0;
}

int cmd_enhance(OptionSet& opt) {
  const std::string out_dir = opt.str("out-dir");
  fs::create_directories(out_dir);
  Manifest manifest("enhance");
  Checkpoint cp = load_checkpoint_input(opt, manifest);
  LoadedDataset ds = load_dataset(opt);
  for (const std::string& f : ds.input_files)
    manifest.add_input_file(fs::path(f).filename().string(), f);

  const LabeledData& raw = ds.handle.test.size() > 0 ? ds.handle.test : ds.handle.train;
  const int64_t count = std::min<int64_t>(opt.integer("count"), raw.size());
  if (count < 1) throw ConfigError("no images to enhance");

  std::vector<int64_t> shape = raw.images.shape();
  shape[0] = count;
  Tensor batch(shape);
  std::copy(raw.images.data(), raw.images.data() + batch.numel(), batch.data());

  EnhanceConfig cfg;
  cfg.quantile = opt.num("enhance.quantile");
  cfg.sigma = opt.num("enhance.sigma");
  cfg.kernel_size = opt.integer("enhance.kernel-size");
  cfg.blur_sigma = opt.num("enhance.blur-sigma");
  cfg.sample_rate = opt.num("enhance.rate");
  cfg.seed = static_cast<uint64_t>(opt.integer("seed"));

  Tensor masks = input_mask(cp.model, normalize_images(batch, cp.norm_mean, cp.norm_std), cfg);
  Tensor enhanced = enhance(batch, masks, cfg);
  const std::vector<int64_t> selected = enhance_selection(count, cfg.sample_rate, cfg.seed);
  std::set<int64_t> selected_set(selected.begin(), selected.end());

  CsvWriter csv({"image_id", "selected", "changed_pixels"});
  const int64_t per = batch.numel() / count;
  for (int64_t i = 0; i < count; ++i) {
    int64_t changed = 0;
    for (int64_t j = 0; j < per; ++j)
      if (batch[i * per + j] != enhanced[i * per + j]) ++changed;
    csv.add_row({csv_format(i), csv_format(static_cast<int64_t>(selected_set.count(i))),
                 csv_format(changed)});
    char name[64];
    std::snprintf(name, sizeof(name), "enhanced_%04d.ppm", static_cast<int>(i));
    const std::string ppm = (fs::path(out_dir) / name).string();
    write_ppm(ppm, slice_leading(enhanced, i).reshaped({shape[1], shape[2], shape[3]}));
    manifest.add_artifact(ppm);
  }
  const std::string path = (fs::path(out_dir) / "enhance.csv").string();
  csv.write(path);
  manifest.add_artifact(path);
  finish_manifest(manifest, opt, out_dir);
  return 0;
}

int cmd_prune(OptionSet& opt) {
  const std::string out_dir = opt.str("out-dir");
  fs::create_directories(out_dir);
  Manifest manifest("prune");
  Checkpoint cp = load_checkpoint_input(opt, manifest);
  LoadedDataset ds = load_dataset(opt);
  for (const std::string& f : ds.input_files)
    manifest.add_input_file(fs::path(f).filename().string(), f);

  LabeledData eval_split = normalized_split(ds.handle.test.size() > 0 ? ds.handle.test
                                                                      : ds.handle.train,
                                            cp);
  const std::string scope_str = opt.str("scope");
  PruneScope scope;
  if (scope_str == "layerwise") scope = PruneScope::Layerwise;
  else if (scope_str == "global") scope = PruneScope::Global;
  else throw ConfigError("scope must be layerwise or global");

  std::vector<double> fractions = opt.num_list("fractions");
  std::sort(fractions.begin(), fractions.end());

  CsvWriter csv({"prune_fraction", "scope", "val_acc"});
  for (double f : fractions) {
    Model pruned = prune_l1(cp.model, f, scope);
    EvalResult r = evaluate(pruned, eval_split);
    csv.add_row({csv_format(f), scope_str, csv_format(r.accuracy)});
    std::cout << "fraction " << f << " (" << scope_str << "): acc " << r.accuracy << "\n";
    if (opt.flag("save-pruned")) {
      Checkpoint pc = cp;
      pc.model = pruned;
      pc.prune = PruneMeta{f, scope_str, count_zero_prunable_weights(pruned)};
      char name[64];
      std::snprintf(name, sizeof(name), "pruned_%s_%03d.bin", scope_str.c_str(),
                    static_cast<int>(std::lround(f * 100)));
      const std::string p = (fs::path(out_dir) / name).string();
      save_checkpoint(p, pc);
      manifest.add_artifact(p);
    }
  }
  const std::string path = (fs::path(out_dir) / "prune.csv").string();
  csv.write(path);
  manifest.add_artifact(path);
  finish_manifest(manifest, opt, out_dir);
  return 0;
}

int cmd_attack(OptionSet& opt) {
  const std::string out_dir = opt.str("out-dir");
  fs::create_directories(out_dir);
  Manifest manifest("attack");
  Checkpoint cp = load_checkpoint_input(opt, manifest);
  LoadedDataset ds = load_dataset(opt);
  for (const std::string& f : ds.input_files)
    manifest.add_input_file(fs::path(f).filename().string(), f);

  LabeledData eval_split = normalized_split(ds.handle.test.size() > 0 ? ds.handle.test
                                                                      : ds.handle.train,
                                            cp);
  const int64_t limit = opt.integer("limit");
  if (limit > 0 && eval_split.size() > limit) {
    std::vector<int64_t> shape = eval_split.images.shape();
    shape[0] = limit;
    const int64_t per = eval_split.images.numel() / eval_split.size();
    Tensor imgs(shape);
    std::copy(eval_split.images.data(), eval_split.images.data() + limit * per, imgs.data());
    eval_split.images = std::move(imgs);
    eval_split.labels.resize(static_cast<size_t>(limit));
  }

  std::vector<int64_t> subset = correctly_predicted(cp.model, eval_split);
  std::optional<Checkpoint> cp2;
  if (!opt.str("checkpoint2").empty()) {
    cp2 = load_checkpoint_input(opt, manifest, "checkpoint2");
    const std::vector<int64_t> other = correctly_predicted(cp2->model, eval_split);
    std::vector<int64_t> both;
    std::set_intersection(subset.begin(), subset.end(), other.begin(), other.end(),
                          std::back_inserter(both));
    subset = std::move(both);
  }

  const std::vector<double> epsilons = opt.num_list("epsilons");
  auto run = [&](const Model& model, const std::string& filename) {
    const auto report =
        eval_under_attack(model, eval_split, subset, epsilons, cp.clip_min, cp.clip_max);
    CsvWriter csv({"epsilon", "adv_acc", "n_samples"});
    for (const auto& row : report) {
      csv.add_row({csv_format(row.epsilon), csv_format(row.adv_acc), csv_format(row.n_samples)});
      std::cout << filename << " eps " << row.epsilon << ": adv_acc " << row.adv_acc << " (n="
                << row.n_samples << ")\n";
    }
    const std::string path = (fs::path(out_dir) / filename).string();
    csv.write(path);
    manifest.add_artifact(path);
  };
  run(cp.model, "attack.csv");
  if (cp2) run(cp2->model, "attack_2.csv");
  finish_manifest(manifest, opt, out_dir);
  return 0;
}

int cmd_gsnr(OptionSet& opt) {
  const std::string out_dir = opt.str("out-dir");
  fs::create_directories(out_dir);
  Manifest manifest("gsnr");
  Checkpoint cp = load_checkpoint_input(opt, manifest);
  LoadedDataset ds = load_dataset(opt);
  for (const std::string& f : ds.input_files)
    manifest.add_input_file(fs::path(f).filename().string(), f);

  LabeledData split = normalized_split(ds.handle.train, cp);
  const int64_t batch_size = opt.integer("batch-size");
  const int64_t batches = std::min<int64_t>(opt.integer("batches"),
                                            (split.size() + batch_size - 1) / batch_size);
  if (batches < 1) throw ConfigError("dataset too small for one batch");

  // the epoch column is the measurement iteration index for this subcommand
  CsvWriter csv({"epoch", "layer", "mean_gsnr", "p50", "p90"});
  const int64_t per = split.images.numel() / split.size();
  for (int64_t it = 0; it < batches; ++it) {
    const int64_t lo = it * batch_size;
    const int64_t hi = std::min(split.size(), lo + batch_size);
    if (hi - lo < 2) break;
    std::vector<int64_t> shape = split.images.shape();
    shape[0] = hi - lo;
    Tensor batch(shape);
    std::copy(split.images.data() + lo * per, split.images.data() + hi * per, batch.data());
    std::vector<int> labels(split.labels.begin() + lo, split.labels.begin() + hi);

    Tape tape = forward(cp.model, batch);
    LossResult loss = cross_entropy(tape.output(), labels);
    Tensor seeds = per_sample_loss_seeds(loss, labels);
    std::vector<Gradients> psg = per_sample_gradients(cp.model, tape, seeds);

    std::map<std::string, std::vector<double>> pools;
    for (const auto& [name, g0] : psg.front().by_param) {
      std::vector<const Tensor*> grads;
      for (const auto& s : psg) grads.push_back(&s.by_param.at(name));
      Tensor r = gsnr_from_pointers(grads);
      const std::string group = name.substr(0, name.find('.'));
      auto& pool = pools[group];
      pool.insert(pool.end(), r.data(), r.data() + r.numel());
    }
    for (auto& [group, pool] : pools) {
      const double mean = std::accumulate(pool.begin(), pool.end(), 0.0) /
                          static_cast<double>(pool.size());
      std::sort(pool.begin(), pool.end());
      csv.add_row({csv_format(it), group, csv_format(mean),
                   csv_format(percentile_sorted(pool, 0.5)),
                   csv_format(percentile_sorted(pool, 0.9))});
    }
  }
  const std::string path = (fs::path(out_dir) / "gsnr.csv").string();
  csv.write(path);
  manifest.add_artifact(path);
  finish_manifest(manifest, opt, out_dir);
  return 0;
}

void usage() {
  std::cout <<
      "usage: lateralgrad <subcommand> [--config file] [--key value ...]\n"
      "subcommands: train eval saliency enhance prune attack gsnr\n"
      "Keys are shared between config files (key=value lines, '#' comments)\n"
      "and flags; a flag overrides the config value with a warning.\n"
      "Run `lateralgrad <subcommand> --help` for the key list.\n";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage();
    return 2;
  }
  const std::string sub = argv[1];
  std::vector<std::string> args(argv + 2, argv + argc);
  const bool want_help = std::find(args.begin(), args.end(), "--help") != args.end();
  if (want_help) args.erase(std::find(args.begin(), args.end(), "--help"));

  OptionSet opt;
  define_common(opt);
  int (*handler)(OptionSet&) = nullptr;
  if (sub == "train") {
    opt.define("epochs", "3", "training epochs");
    opt.define("batch-size", "64", "minibatch size");
    opt.define("lr", "0.05", "learning rate");
    opt.define("momentum", "0.9", "SGD momentum");
    opt.define("weight-decay", "0.0005", "L2 weight decay");
    opt.define("arch", "c2", "c2 | c3 model preset");
    opt.define("resume", "", "checkpoint to continue from");
    opt.define("gsnr.every", "0", "measure GSNR on every Nth batch (0 = off)");
    define_mask(opt);
    handler = cmd_train;
  } else if (sub == "eval") {
    opt.define("checkpoint", "", "model checkpoint");
    handler = cmd_eval;
  } else if (sub == "saliency") {
    opt.define("checkpoint", "", "model checkpoint");
    opt.define("count", "8", "images to explain");
    opt.define("top-fraction", "0.15", "fraction of brightest pixels in the box");
    opt.define("saliency.sigma", "2", "LoG sigma for the LI map");
    opt.define("saliency.kernel-size", "0", "LoG taps; 0 derives from sigma");
    opt.define("rectify", "true", "sum |delta| (true) or signed delta (false)");
    opt.define("target", "label", "label | pred backprop target");
    handler = cmd_saliency;
  } else if (sub == "enhance") {
    opt.define("checkpoint", "", "model checkpoint");
    opt.define("count", "8", "images to enhance");
    opt.define("enhance.quantile", "0.5", "background quantile q");
    opt.define("enhance.sigma", "2", "LoG sigma of the saliency pipeline");
    opt.define("enhance.kernel-size", "0", "LoG taps; 0 derives from sigma");
    opt.define("enhance.blur-sigma", "2", "gaussian blur sigma for inhibited areas");
    opt.define("enhance.rate", "1.0", "fraction of images enhanced");
    handler = cmd_enhance;
  } else if (sub == "prune") {
    opt.define("checkpoint", "", "model checkpoint");
    opt.define("fractions", "0,0.3,0.5,0.7,0.9", "prune fractions (comma separated)");
    opt.define("scope", "layerwise", "layerwise | global ranking");
    opt.define("save-pruned", "false", "also write pruned checkpoints");
    handler = cmd_prune;
  } else if (sub == "attack") {
    opt.define("checkpoint", "", "model checkpoint");
    opt.define("checkpoint2", "", "second model; restricts to commonly-correct images");
    opt.define("epsilons", "0,2/255,4/255,8/255", "FGSM strengths, normalized units");
    opt.define("limit", "512", "evaluation images drawn from the test split");
    handler = cmd_attack;
  } else if (sub == "gsnr") {
    opt.define("checkpoint", "", "model checkpoint");
    opt.define("batches", "8", "batches to measure");
    opt.define("batch-size", "64", "per-sample gradient batch size");
    handler = cmd_gsnr;
  } else {
    std::cerr << "unknown subcommand '" << sub << "'\n";
    usage();
    return 2;
  }

  if (want_help) {
    std::cout << "lateralgrad " << sub << " keys:\n" << opt.help_text();
    return 0;
  }

  try {
    opt.parse_flags(args);
    opt.finalize(warn);
    return handler(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
