#include <CLI11.hpp>

#include <iostream>

#include "poseforge/pipeline.hpp"

namespace pf = poseforge::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised pose embeddings from unlabeled video"};
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out = "out";
  int threads = poseforge::default_threads();
  bool quiet = false;

  app.add_option("command", command, "Pipeline stage")->required()->check(CLI::IsMember(pf::kCommands));
  app.add_option("-c,--config", config_path, "Key-value config file");
  app.add_option("-s,--set", overrides, "Override one key (key=value), repeatable");
  app.add_option("-o,--out", out, "Output directory")->capture_default_str();
  app.add_option("-t,--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("-q,--quiet", quiet, "No progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "poseforge: " << e.what() << '\n';
    return 2;
  }

  try {
    pf::RunContext ctx;
    ctx.cfg = pf::load_config(config_path, overrides);
    ctx.out = out;
    ctx.threads = threads;
    ctx.log = quiet ? nullptr : &std::cerr;
    for (const auto& p : pf::run(command, ctx)) std::cout << p.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "poseforge " << command << ": " << msg << '\n';
    return pf::exit_status(e);
  }
}
