#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "kslab/config.hpp"
#include "kslab/experiment.hpp"
#include "kslab/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"kslab: Keller-Segel chemotaxis numerical lab"};
  std::string config_path;
  kslab::RunOverrides ov;
  std::string output, dump;
  app.add_option("config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
  auto* out_opt = app.add_option("-o,--output", output, "output file, '-' for stdout (overrides [experiment] output)");
  auto* dump_opt = app.add_option("--dump-fields", dump, "write final u, v as <prefix>_u.bin, <prefix>_v.bin");
  app.set_version_flag("--version", std::string("kslab ") + kslab::kVersion);
  CLI11_PARSE(app, argc, argv);
  if (*out_opt) ov.output = output;
  if (*dump_opt) ov.dump_fields = dump;

  std::ifstream in(config_path, std::ios::binary);
  std::stringstream text;
  text << in.rdbuf();
  if (!in) {
    std::cerr << "kslab: cannot read " << config_path << '\n';
    return kslab::kExitError;
  }
  kslab::ExperimentConfig cfg;
  try {
    cfg = kslab::parse_config(text.str());
  } catch (const std::exception& e) {
    std::cerr << "kslab: " << config_path << ": " << e.what() << '\n';
    return kslab::kExitError;
  }
  return kslab::run_experiment(cfg, std::cerr, ov);
}
