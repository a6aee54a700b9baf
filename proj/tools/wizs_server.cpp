// HTTP prediction service.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <csignal>
#include <thread>

#include "wizs/blob.hpp"
#include "wizs/calibration.hpp"
#include "wizs/error.hpp"
#include "wizs/log.hpp"
#include "wizs/providers.hpp"
#include "wizs/service.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Serves the prediction API and the web UI assets."};
  std::string config_path;
  std::optional<int> port;
  std::optional<std::string> host;
  std::string log_level = "info";
  app.add_option("--config", config_path, "Service config (JSON)")
      ->envname("WIZS_SERVICE_CONFIG")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--port", port, "Overrides the configured port; 0 picks a free one")->check(CLI::Range(0, 65535));
  app.add_option("--host", host, "Overrides the configured bind address");
  app.add_option("--log-level", log_level, "Log level on stderr")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  wizs::logger()->set_level(spdlog::level::from_str(log_level));

  // Handled by a dedicated thread via sigwait; block before any thread starts.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    auto config = wizs::load_service_config(config_path);
    if (port) config.port = *port;
    if (host) config.host = *host;
    if (config.calibration.empty()) {
      throw wizs::Error(wizs::ErrorCode::kInvalidArgument,
                        "service config has no 'calibration' model path");
    }
    auto model = wizs::load_model(wizs::read_file(config.calibration));
    if (!model.fit_meta.converged) {
      throw wizs::Error(wizs::ErrorCode::kUnconvergedModel, "calibration model did not converge");
    }
    if (model.label == "synthetic") {
      wizs::logger()->warn("calibration model is fitted on synthetic data; predictions are illustrative only");
    }
    auto provider_config = config.providers.empty() ? wizs::ProviderConfig{}
                                                    : wizs::load_provider_config(config.providers);
    wizs::Service service(config, wizs::make_providers(provider_config), std::move(model));
    const int bound = service.bind();
    fmt::print("listening on http://{}:{}\n", config.host, bound);
    std::fflush(stdout);

    std::jthread waiter([&] {
      int sig = 0;
      sigwait(&signals, &sig);
      wizs::logger()->info("signal {} received, shutting down", sig);
      service.stop();
    });
    service.run();
    // run() also returns if the listener fails; release the waiter then.
    if (waiter.joinable()) pthread_kill(waiter.native_handle(), SIGTERM);
  } catch (const wizs::Error& e) {
    fmt::print(stderr, "error [{}]: {}\n", wizs::error_code_name(e.code()), e.message());
    return 2;
  }
  return 0;
}
