#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "droneguard/config.hpp"
#include "droneguard/model_io.hpp"
#include "droneguard/nn/lstm.hpp"
#include "droneguard/synth.hpp"

#ifndef DRONEGUARD_CLI_PATH
#error "DRONEGUARD_CLI_PATH must point at the droneguard binary"
#endif

using namespace droneguard;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "droneguard_test_cli";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DRONEGUARD_CLI_PATH) + " " + args + " >" +
                          (kWork / "stdout.txt").string() + " 2>" +
                          (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cli end to end", "[cli]") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);

  SECTION("help exits zero for every subcommand") {
    CHECK(run_cli("--help") == 0);
    for (const char* sub : {"synth", "augment", "train", "detect", "eval", "bench"})
      CHECK(run_cli(std::string(sub) + " --help") == 0);
  }

  SECTION("unknown flags are a usage error") {
    CHECK(run_cli("detect --frobnicate") == 1);
    CHECK(run_cli("--definitely-not-a-flag") == 1);
  }

  SECTION("synth, augment, train gmm, detect, eval") {
    REQUIRE(run_cli("synth --out " + (kWork / "corpus").string() +
                    " --backgrounds 3 --events 1 --bg-duration 2.0 --event-duration 0.8 "
                    "--seed 11") == 0);
    REQUIRE(fs::exists(kWork / "corpus/backgrounds"));

    REQUIRE(run_cli("augment --backgrounds " + (kWork / "corpus/backgrounds").string() +
                    " --events " + (kWork / "corpus/events").string() + " --out " +
                    (kWork / "aug").string() + " --seed 11") == 0);
    const fs::path manifest = kWork / "aug/manifest.jsonl";
    REQUIRE(fs::exists(manifest));

    // a fast GMM: fewer components and restarts than the defaults
    const std::string speed =
        "--set gmm_components=4 --set gmm_restarts=2 --set gmm_max_iterations=60 ";
    REQUIRE(run_cli("train gmm --manifest " + manifest.string() + " --val-split 0.34 --out " +
                    (kWork / "gmm.model").string() + " " + speed + "--seed 3") == 0);
    REQUIRE(fs::exists(kWork / "gmm.model"));

    const auto entries = load_manifest(manifest.string());
    REQUIRE(entries.size() == 3);
    REQUIRE(run_cli("detect --model " + (kWork / "gmm.model").string() + " --input " +
                    entries.front().path + " --out " + (kWork / "timeline.csv").string()) == 0);
    const std::string csv = slurp(kWork / "timeline.csv");
    CHECK(csv.find("# config_hash=") == 0);
    CHECK(csv.find("time_s,label,score") != std::string::npos);
    // training audio carries both halves, so both labels should appear
    CHECK(csv.find(",0,") != std::string::npos);
    CHECK(csv.find(",1,") != std::string::npos);

    REQUIRE(run_cli("eval --model " + (kWork / "gmm.model").string() + " --manifest " +
                    manifest.string() + " --reps 3 --out " + (kWork / "m1.json").string()) == 0);
    REQUIRE(run_cli("eval --model " + (kWork / "gmm.model").string() + " --manifest " +
                    manifest.string() + " --reps 3 --out " + (kWork / "m2.json").string()) == 0);
    const std::string m1 = slurp(kWork / "m1.json");
    CHECK(m1 == slurp(kWork / "m2.json"));  // byte-identical rerun
    CHECK(m1.find("\"stddev\"") != std::string::npos);
    const auto j = nlohmann::json::parse(m1);
    CHECK(j["stddev"]["f_score"] == 0.0);  // deterministic model across reps
  }

  SECTION("detect with an RNN on a clip shorter than one window") {
    fs::create_directories(kWork);
    // a small untrained bilstm written straight to disk
    RunConfig cfg;
    cfg.rnn_hidden = 6;
    cfg.rnn_layers = 1;
    cfg.validate();
    nn::RnnArch arch;
    arch.input_dim = cfg.n_mels;
    arch.steps = cfg.frames_per_window;
    arch.hidden = cfg.rnn_hidden;
    arch.num_layers = cfg.rnn_layers;
    nn::BiLstmNet<double> net(arch);
    net.init(1);
    const std::string model = (kWork / "tiny_rnn.model").string();
    save_rnn(net, model, cfg.rnn_train_config(), nn::TrainHistory{}, cfg.canonical());

    const AudioClip blip = synth_background(0.1, 24000, 3);  // 100 ms < 240 ms window
    write_wav(blip, (kWork / "blip.wav").string());
    REQUIRE(run_cli("detect --model " + model + " --input " + (kWork / "blip.wav").string() +
                    " --out " + (kWork / "empty.csv").string()) == 0);
    const std::string csv = slurp(kWork / "empty.csv");
    std::istringstream lines(csv);
    std::string line;
    std::size_t n_lines = 0;
    while (std::getline(lines, line)) ++n_lines;
    CHECK(n_lines == 2);  // config hash comment + header only
  }

  SECTION("missing inputs are runtime failures") {
    CHECK(run_cli("detect --model /nope.model --input /nope.wav --out /tmp/x.csv") == 2);
    CHECK(run_cli("train gmm --manifest /nope.jsonl --out /tmp/x.model") == 2);
  }

  SECTION("invalid config values are validation failures") {
    CHECK(run_cli("synth --out " + (kWork / "c2").string() + " --set hop_ms=90") == 1);
    CHECK(run_cli("synth --out " + (kWork / "c2").string() + " --set no_such=1") == 1);
  }
}
