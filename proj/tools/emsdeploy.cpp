// emsdeploy: command-line driver for the ambulance deployment pipeline.

#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

using namespace emsdeploy;
using namespace emsdeploy::cli;

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot hash " + p.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

void write_manifest(Run& run) {
  json inputs = json::object(), outputs = json::object();
  for (const auto& [name, path] : run.inputs()) inputs[name] = sha256_file(path);
  for (const auto& [name, path] : run.outputs()) outputs[name] = sha256_file(path);
  json m{{"command", run.command()}, {"config", run.cfg().values()}, {"inputs", inputs}, {"outputs", outputs}};
  write_text((run.out() / ("manifest_" + run.command() + ".json")).string(), m.dump(2) + "\n");
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("emsdeploy");
  logger->set_pattern("[%l] %v");
  const char* env = std::getenv("EMSDEPLOY_LOG");
  logger->set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
  spdlog::set_default_logger(logger);
}

int run_main(int argc, char** argv) {
  CLI::App app{"Ambulance deployment pipeline: grid, preprocess, fit, optimize, simulate, verify, "
               "alpha-cv, fleet-sweep, analyze, plotdata, synth.\n"
               "Any config key can be overridden with --key value."};
  app.allow_extras();
  std::vector<std::string> names;
  std::string help = "subcommand:";
  for (const auto& c : commands()) {
    names.emplace_back(c.name);
    help += std::string("\n  ") + c.name + ": " + c.help;
  }
  std::string command, config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  app.add_option("command", command, help)->required()->check(CLI::IsMember(names));
  app.add_option("--config", config_path, "flat JSON config file");
  app.add_option("--seed", seed, "root random seed");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    auto cfg = RunConfig::load(config_path);
    cfg.apply_overrides(app.remaining());
    if (seed) cfg.set("seed", *seed);
    cfg.validate();
    Run run(command, cfg, out_dir);
    for (const auto& c : commands())
      if (command == c.name) c.fn(run);
    write_manifest(run);
    return 0;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return 3;
  } catch (const SolverError& e) {
    spdlog::error("solver error: {}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  return run_main(argc, argv);
}
