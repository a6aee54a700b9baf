// Writes a seeded synthetic bundle for demos and tests.

#include <CLI11.hpp>
#include <fmt/format.h>

#include "wizs/error.hpp"
#include "wizs/manifest.hpp"
#include "wizs/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Writes a synthetic embedding bundle with labeled held-out images."};
  wizs::SynthOptions o;
  std::string out;
  std::string dataset_id;
  app.add_option("--out", out, "Output bundle directory")->required();
  app.add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app.add_option("--classes", o.n_classes, "Number of classes")->check(CLI::Range(2, 1000))->capture_default_str();
  app.add_option("--dim", o.dim, "Embedding dimension (at least classes + 3)")->capture_default_str();
  app.add_option("--generated", o.n_generated, "Generated images per class")->capture_default_str();
  app.add_option("--captions", o.n_captions, "Descriptive captions per class")->capture_default_str();
  app.add_option("--real", o.n_real, "Labeled real images per class")->capture_default_str();
  app.add_option("--noise-min", o.noise_min, "Smallest per-class noise scale")->capture_default_str();
  app.add_option("--noise-max", o.noise_max, "Largest per-class noise scale")->capture_default_str();
  app.add_option("--dataset-id", dataset_id, "Manifest dataset_id (default synth-<seed>)");
  CLI11_PARSE(app, argc, argv);

  try {
    wizs::BundleManifest m;
    m.dataset_id = dataset_id.empty() ? fmt::format("synth-{}", o.seed) : dataset_id;
    m.model_id = "synthetic";
    m.dim = static_cast<std::uint32_t>(o.dim);
    const auto path = wizs::save_bundle(out, m, wizs::synth_raw(o));
    fmt::print("{}\n", path.string());
  } catch (const wizs::Error& e) {
    fmt::print(stderr, "error [{}]: {}\n", wizs::error_code_name(e.code()), e.message());
    return 2;
  }
  return 0;
}
