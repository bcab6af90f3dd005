#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "simshear/dataset.h"
#include "simshear/translate/metrics.h"
#include "simshear/translate/networks.h"

namespace simshear::translate {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  double generator_loss = 0.0;
  double discriminator_loss = 0.0;
  double reconstruction = 0.0;
  double val_mape = 0.0;
};

/// Per-component divisors mapping shear (mm, mm, mm, deg) to [-1, 1].
using ShearScale = std::array<double, 4>;
ShearScale shear_scale_from_ranges(const ContactRanges& ranges);

/// Images of a set of tuples as an (n, 1, H, W) tensor.
nn::Tensor stack_images(const std::vector<const ImageArray*>& images);
ImageArray unstack_image(const nn::Tensor& t, int index);

/// Generator, discriminator and the metadata of one trained translator.
class Translator {
 public:
  Translator(TranslatorConfig config, ShearScale shear_scale, std::uint64_t init_seed);

  static Translator load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const TranslatorConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  const ShearScale& shear_scale() const { return shear_scale_; }
  Generator& generator() { return *gen_; }
  Discriminator& discriminator() { return *disc_; }

  /// (n, 4, 1, 1) scaled shear batch.
  nn::Tensor shear_tensor(const std::vector<ShearVector>& shears) const;

  /// Inference-mode generation. `shears` must be empty for pix2pix and
  /// match `sims` in length for shpix2pix.
  std::vector<ImageArray> generate(const std::vector<const ImageArray*>& sims,
                                   const std::vector<ShearVector>& shears);
  TactileImage generate(const TactileImage& sim, const ShearVector* shear);

  /// Inference-mode patch scores, one map per pair.
  nn::Tensor score(const std::vector<const ImageArray*>& sims,
                   const std::vector<const ImageArray*>& candidates);

  std::vector<EpochRecord> curve;
  int best_epoch = 0;
  double best_val_mape = 0.0;

 private:
  std::vector<nn::StateEntry> state() const;

  TranslatorConfig config_;
  ShearScale shear_scale_;
  std::unique_ptr<Generator> gen_;
  std::unique_ptr<Discriminator> disc_;
};

/// Alternating discriminator/generator updates with Adam; early stopping on
/// val MAPE restores the best epoch's weights. Progress lines go to `log`.
Translator train_translator(const DatasetManifest& manifest, TranslatorConfig config,
                            std::ostream* log = nullptr);

void write_curve_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& curve);

struct MetricRow {
  double mape = 0.0;
  double ssim = 0.0;
  int count = 0;
};

/// Rows keyed "edge", "surface", "overall".
using TranslationMetrics = std::map<std::string, MetricRow>;

Json to_json(const TranslationMetrics& m);

/// Maps each tuple to the image compared against its real image.
using TranslateFn = std::function<std::vector<ImageArray>(const std::vector<SampleTuple>&)>;

TranslationMetrics eval_translation(const std::vector<SampleTuple>& tuples, const TranslateFn& fn);
TranslationMetrics eval_translation(Translator& translator, const std::vector<SampleTuple>& tuples);

/// Batched translation of tuples (sim image plus shear when conditioned).
std::vector<ImageArray> translate_tuples(Translator& translator,
                                         const std::vector<SampleTuple>& tuples);

}  // namespace simshear::translate
