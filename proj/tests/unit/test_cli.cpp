#include <filesystem>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "dlka/io.hpp"

using namespace dlka;
namespace fs = std::filesystem;

namespace {

struct Result {
  int rc;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int rc = cli::run(args, out, err);
  return {rc, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("dlka_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::vector<std::string> kTiny{
    "--set", "net.rank=2",         "--set", "net.base_channels=4",
    "--set", "net.encoder_blocks=1", "--set", "net.decoder_blocks=1",
    "--set", "lka.K=7",            "--set", "lka.d=2",
    "--set", "data.count=5",       "--set", "data.dims=32,32",
    "--set", "train.hd95=false"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).rc == 2);
  CHECK(run({"frobnicate"}).rc == 2);
  CHECK(run({"cost", "--no-such-flag"}).rc == 2);
  CHECK(run({"cost", "--rank", "4"}).rc == 2);
  CHECK(run({"synth"}).rc == 2);
  CHECK(run({"--help"}).rc == 0);
}

TEST_CASE("validation errors exit with 3") {
  CHECK(run(concat({"train"}, {"--set", "lka.d=0"})).rc == 3);
  CHECK(run({"train", "--set", "lka.nope=1"}).rc == 3);
  CHECK(run({"gradcheck", "--op", "no_such_op"}).rc == 3);
  CHECK(run({"eval", "--checkpoint", "/nonexistent/ck.dlkc"}).rc == 3);
}

TEST_CASE("cost prints the table") {
  Result r = run({"cost", "--bias", "table"});
  CHECK(r.rc == 0);
  CHECK(r.out.find("451,584") != std::string::npos);
  CHECK(r.out.find("2,458,722") != std::string::npos);
  Result csv = run({"cost", "--bias", "table", "--csv"});
  CHECK(csv.out.find("115605504") != std::string::npos);
  Result opt = run({"cost", "--optimal", "--K", "21"});
  CHECK(opt.rc == 0);
  CHECK(opt.out.find("3.37") != std::string::npos);
}

TEST_CASE("gradcheck subcommand") {
  Result r = run({"gradcheck", "--op", "gelu", "--seeds", "2", "--csv"});
  CHECK(r.rc == 0);
  CHECK(r.out.rfind("op,seed,tensor", 0) == 0);
  CHECK(run({"gradcheck", "--list"}).out.find("dlka_block_3d") != std::string::npos);
}

TEST_CASE("synth, train, eval and infer") {
  const fs::path dir = scratch("pipeline");
  const std::string data = (dir / "data").string();
  CHECK(run({"--seed", "3", "synth", "--rank", "2", "--count", "5", "--dims", "32,32",
             "--out", data})
            .rc == 0);
  CHECK(fs::exists(dir / "data" / "image_0000.dlkv"));
  CHECK(fs::exists(dir / "data" / "label_0004.dlkv"));
  auto loaded = cli::load_dataset(data);
  auto fresh = synth_generate(2, 5, {32, 32}, 3, 3);
  REQUIRE(loaded.size() == 5);
  CHECK(loaded[2].label.data == fresh[2].label.data);
  CHECK(max_abs_diff(loaded[2].image, fresh[2].image) == 0);

  const std::string ck = (dir / "ck.dlkc").string();
  const std::string log = (dir / "log.csv").string();
  Result t = run(concat({"--seed", "3", "train", "--epochs", "2", "--data", data,
                         "--checkpoint", ck, "--log", log},
                        kTiny));
  REQUIRE(t.rc == 0);
  CHECK(t.out.rfind("epoch,loss,dice_mean,dice_c1,dice_c2,hd95_mean\n", 0) == 0);
  CHECK(read_file(log) == t.out);
  CHECK(checkpoint_load(ck).epoch == 2);

  Result e = run({"eval", "--checkpoint", ck, "--data", data, "--no-hd95"});
  CHECK(e.rc == 0);
  CHECK(e.out.rfind("samples,dice_mean,dice_c1,dice_c2,hd95_mean\n1,", 0) == 0);

  const std::string out = (dir / "labels.dlkv").string();
  Result i = run({"infer", "--checkpoint", ck, "--input", data + "/image_0001.dlkv",
                  "--output", out});
  CHECK(i.rc == 0);
  LabelMap lm = raster_to_labels(raster_read(out));
  CHECK(lm.shape == Shape{1, 32, 32});
  const std::string odd = (dir / "odd.dlkv").string();
  raster_write(odd, raster_from_tensor(Tensor({1, 1, 30, 32}, real(0))));
  CHECK(run({"infer", "--checkpoint", ck, "--input", odd, "--output", out}).rc == 3);
  fs::remove_all(dir);
}

TEST_CASE("resume continues the run exactly") {
  const fs::path dir = scratch("resume");
  const std::string a = (dir / "a.dlkc").string(), b = (dir / "b.dlkc").string();
  Result full = run(concat({"train", "--epochs", "3", "--checkpoint", a}, kTiny));
  REQUIRE(full.rc == 0);
  Result first = run(concat({"train", "--epochs", "1", "--checkpoint", b}, kTiny));
  REQUIRE(first.rc == 0);
  Result rest = run({"train", "--resume", b, "--epochs", "3", "--checkpoint", b});
  REQUIRE(rest.rc == 0);
  // Same rows for epochs 2 and 3.
  const std::string tail_full = full.out.substr(full.out.find("\n2,"));
  const std::string tail_rest = rest.out.substr(rest.out.find("\n2,"));
  CHECK(tail_full == tail_rest);
  CHECK(read_file(a) == read_file(b));
  CHECK(run({"train", "--resume", b, "--set", "lka.K=9"}).rc == 2);
  fs::remove_all(dir);
}

TEST_CASE("divergence exits with 4") {
  Result r = run(concat({"train", "--epochs", "4", "--set", "train.lr=1e12"}, kTiny));
  CHECK(r.rc == 4);
  CHECK(r.err.find("non-finite") != std::string::npos);
}

TEST_CASE("bench subcommand") {
  Result empty = run(concat({"bench", "--repetitions", "0"}, kTiny));
  CHECK(empty.rc == 0);
  CHECK(empty.out == "batch,deformable,params,repetitions,batch_mean_ms,mean_ms,median_ms,p95_ms\n");
  Result r = run(concat({"bench", "--repetitions", "2", "--warmup", "0", "--batch", "1,2"}, kTiny));
  CHECK(r.rc == 0);
  int lines = 0;
  for (char c : r.out) lines += c == '\n';
  CHECK(lines == 5);
}
