#include <gtest/gtest.h>

#include <sys/wait.h>

#include <functional>
#include <set>
#include <sstream>

#include "maskface/cli.hpp"
#include "maskface/config.hpp"
#include "maskface/errors.hpp"
#include "test_util.hpp"

using namespace maskface;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

fs::path write_text(const fs::path& path, const std::string& text) {
  testutil::write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
  return path;
}

std::string read_text(const fs::path& path) {
  const auto bytes = testutil::read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

struct Spawned {
  int exit_code = -1;
  std::string output;
};

// Runs the installed binary from `cwd` with stderr folded into stdout.
Spawned spawn(const fs::path& cwd, const std::string& args, const std::string& env = "") {
  const std::string cmd = "cd '" + cwd.string() + "' && " + env + " '" + MASKFACE_CLI + "' " + args + " 2>&1";
  Spawned s;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return s;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) s.output.append(buf, n);
  const int status = ::pclose(pipe);
  s.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return s;
}

std::set<fs::path> tree(const fs::path& root) {
  std::set<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) out.insert(fs::relative(e.path(), root));
  return out;
}

}  // namespace

TEST(Config, EmptyFileGivesUnmaskedDefaults) {
  TempDir dir;
  const auto cfg = parse_config(write_text(dir / "empty.cfg", ""), {});
  EXPECT_EQ(cfg.train.batch_size, 256);
  EXPECT_EQ(cfg.train.optimizer, OptimizerKind::kSgd);
  EXPECT_FLOAT_EQ(cfg.train.dropout_p, 0.5f);
  EXPECT_DOUBLE_EQ(cfg.train.base_lr, 0.002);
  EXPECT_EQ(cfg.train.epochs, 20);
  EXPECT_EQ(cfg.min_images, 8);
  EXPECT_DOUBLE_EQ(cfg.train_fraction, 0.7);
  EXPECT_EQ(cfg.image_size, 180);
}

TEST(Config, MaskedSettingsOnOneLine) {
  TempDir dir;
  const auto path = write_text(dir / "m.cfg",
                               "# masked run\nbatch_size=32 optimizer=adam dropout=0.4 lr=0.0016 lr_gamma=0.1\n"
                               "freeze_children=7   epochs=25\n");
  const auto cfg = parse_config(path, {});
  EXPECT_EQ(cfg.train.batch_size, 32);
  EXPECT_EQ(cfg.train.optimizer, OptimizerKind::kAdam);
  EXPECT_FLOAT_EQ(cfg.train.dropout_p, 0.4f);
  EXPECT_DOUBLE_EQ(cfg.train.base_lr, 0.0016);
  EXPECT_DOUBLE_EQ(cfg.train.lr_gamma, 0.1);
  EXPECT_EQ(cfg.train.freeze_children, 7);
  EXPECT_EQ(cfg.train.epochs, 25);

  const auto preset = parse_config(write_text(dir / "p.cfg", "preset=masked\n"), {});
  EXPECT_EQ(preset.train.batch_size, 32);
  EXPECT_EQ(preset.train.lr_step_size, 14);
}

TEST(Config, ErrorsNameTheProblem) {
  TempDir dir;
  auto message_of = [](const std::function<void()>& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const auto opt = write_text(dir / "o.cfg", "optimizer=adagrad\n");
  EXPECT_NE(message_of([&] { parse_config(opt, {}); }).find("unknown optimizer"), std::string::npos);
  const auto unknown = write_text(dir / "u.cfg", "epochs=3\n\nbogus=1\n");
  const auto msg = message_of([&] { parse_config(unknown, {}); });
  EXPECT_NE(msg.find("u.cfg:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("bogus"), std::string::npos) << msg;
  const auto junk = write_text(dir / "j.cfg", "epochs\n");
  EXPECT_NE(message_of([&] { parse_config(junk, {}); }).find("expected key=value"), std::string::npos);
  EXPECT_NE(message_of([&] { parse_config(std::nullopt, {{"epochs", "x"}}); }).find("--epochs"), std::string::npos);
  EXPECT_THROW(parse_config(std::nullopt, {{"train_fraction", "1.5"}}), ConfigError);
  EXPECT_THROW(parse_config(dir / "missing.cfg", {}), ConfigError);
}

TEST(Config, Precedence) {
  TempDir dir;
  const auto path = write_text(dir / "c.cfg", "preset=masked seed=3 epochs=5\n");
  auto cfg = parse_config(path, {});
  EXPECT_EQ(cfg.train.seed, 3u);
  cfg = parse_config(path, {}, std::string("11"));
  EXPECT_EQ(cfg.train.seed, 11u);
  cfg = parse_config(path, {{"seed", "12"}, {"epochs", "2"}}, std::string("11"));
  EXPECT_EQ(cfg.train.seed, 12u);
  EXPECT_EQ(cfg.train.epochs, 2);
  EXPECT_EQ(cfg.train.batch_size, 32);
  cfg = parse_config(path, {{"preset", "unmasked"}});
  EXPECT_EQ(cfg.train.batch_size, 256);
  EXPECT_EQ(cfg.train.epochs, 5);
}

TEST(Cli, InProcessUsageAndErrors) {
  std::ostringstream out, err;
  const std::vector<std::string> none;
  EXPECT_EQ(run_cli(none, out, err), kExitUsage);
  EXPECT_NE(err.str().find("usage:"), std::string::npos);

  std::ostringstream out2, err2;
  const std::vector<std::string> help = {"--help"};
  EXPECT_EQ(run_cli(help, out2, err2), kExitOk);
  EXPECT_NE(out2.str().find("freeze_children"), std::string::npos);

  std::ostringstream out3, err3;
  const std::vector<std::string> bad_key = {"scan", "--colour", "red"};
  EXPECT_EQ(run_cli(bad_key, out3, err3), kExitUsage);
  EXPECT_NE(err3.str().find("colour"), std::string::npos);
}

TEST(Cli, InProcessScan) {
  TempDir dir;
  testutil::make_class_tree(dir / "data", {{"A", 10}, {"B", 7}, {"C", 8}});
  std::ostringstream out, err;
  const std::vector<std::string> args = {"scan", "--data-root", (dir / "data").string(),
                                         "--output_dir=" + (dir / "out").string()};
  ASSERT_EQ(run_cli(args, out, err), kExitOk) << err.str();
  EXPECT_EQ(out.str(), "classes=2\nimages=18\nclass,count\nA,10\nC,8\n");
  EXPECT_EQ(read_text(dir / "out/class_histogram.csv"), "class,count\nA,10\nC,8\n");
}

TEST(CliBinary, ExitCodes) {
  TempDir dir;
  const auto typo = spawn(dir.path(), "trian");
  EXPECT_EQ(typo.exit_code, 2);
  EXPECT_NE(typo.output.find("unknown command 'trian'"), std::string::npos);

  const auto missing = spawn(dir.path(), "scan --data_root ./nowhere");
  EXPECT_EQ(missing.exit_code, 1);
  EXPECT_NE(missing.output.find("nowhere"), std::string::npos) << missing.output;

  const auto bad_cfg = spawn(dir.path(), "scan --epochs zero");
  EXPECT_EQ(bad_cfg.exit_code, 2);
}

TEST(CliBinary, GradCheckPasses) {
  TempDir dir;
  const auto run = spawn(dir.path(), "grad-check");
  EXPECT_EQ(run.exit_code, 0) << run.output;
  EXPECT_NE(run.output.find("max_rel_error="), std::string::npos);
}

TEST(CliBinary, ScanWritesOnlyIntoOutputDir) {
  TempDir dir;
  testutil::make_class_tree(dir / "data", {{"A", 10}, {"B", 7}, {"C", 8}});
  write_text(dir / "run.cfg", "min_images=8\n");
  const auto before = tree(dir.path());
  const auto run = spawn(dir.path(), "scan --config run.cfg --data_root data --output_dir out", "MASKFACE_SEED=5");
  ASSERT_EQ(run.exit_code, 0) << run.output;
  EXPECT_NE(run.output.find("A,10\nC,8\n"), std::string::npos);
  auto after = tree(dir.path());
  std::erase_if(after, [](const fs::path& p) { return *p.begin() == "out"; });
  EXPECT_EQ(after, before);
  EXPECT_EQ(read_text(dir / "out/class_histogram.csv"), "class,count\nA,10\nC,8\n");
}
