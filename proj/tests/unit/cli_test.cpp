#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "ame/checkpoint.hpp"
#include "ame/cli.hpp"
#include "ame/synthlab.hpp"
#include "fixtures.hpp"

namespace ame {
namespace {

using nlohmann::json;
using testing::max_rel_error;
using testing::random_map;
using testing::read_file;
using testing::TempDir;
using testing::write_text;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(71, 0);
    for (int i = 0; i < 4; ++i) {
      auto m = random_map(rng);
      auto path = dir / ("m" + std::to_string(i) + ".safetensors");
      save_checkpoint(m, path);
      maps.push_back(m);
      paths.push_back(path.string());
    }
  }

  std::string write_json(const std::string& name, const json& doc) {
    auto path = dir / name;
    write_text(path, doc.dump(2));
    return path.string();
  }

  json soup_config() const {
    json ings = json::array();
    for (const auto& p : paths) ings.push_back(p);
    return {{"version", 1},
            {"ingredients", ings},
            {"ensemble",
             {{"ordering", "given"},
              {"n_divisor", 1},
              {"optimizer", {{"method", "gd"}, {"lr", {{"harmonic", 0}}}}}}}};
  }

  TempDir dir;
  std::vector<WeightMap> maps;
  std::vector<std::string> paths;
};

TEST_F(CliTest, SoupWritesMean) {
  auto out = (dir / "soup.safetensors").string();
  auto r = cli({"soup", paths[0], paths[1], paths[2], paths[3], "-o", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("soup of 4"), std::string::npos);
  auto got = load_checkpoint(out);
  // Means of F32 values are rounded back to F32 on disk.
  EXPECT_LT(max_rel_error(got, soup(maps)), 1e-6);
}

TEST_F(CliTest, SoupOfOneIsByteIdentical) {
  auto out = (dir / "copy.safetensors").string();
  ASSERT_EQ(cli({"soup", paths[0], "-o", out, "-q"}).code, 0);
  EXPECT_EQ(read_file(out), read_file(paths[0]));
}

TEST_F(CliTest, SoupIncompatibleNamesTensor) {
  auto odd = (dir / "odd.safetensors").string();
  save_checkpoint(WeightMap({{"block.0.bias", Dtype::F32, {5}, {1, 2, 3, 4, 5}}}), odd);
  auto r = cli({"soup", paths[0], odd, "-o", (dir / "x.safetensors").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("block.0.bias"), std::string::npos);
}

TEST_F(CliTest, MergeMatchesSoup) {
  auto cfg = write_json("merge.json", soup_config());
  auto r = cli({"merge", "--config", cfg, "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto merged = load_checkpoint(dir / "run" / "merged.safetensors");
  auto souped = (dir / "soup.safetensors").string();
  ASSERT_EQ(cli({"soup", paths[0], paths[1], paths[2], paths[3], "-o", souped}).code, 0);
  EXPECT_LT(max_rel_error(merged, load_checkpoint(souped)), 1e-6);
  auto log = read_file(dir / "run" / "run.csv");
  EXPECT_EQ(log.rfind("step,epoch,batch_ids,eta,zeta,grad_norm,displacement,metric,accepted\n", 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 5);
}

TEST_F(CliTest, MergeUsesMetricsCsvOrdering) {
  auto doc = soup_config();
  doc["ensemble"]["ordering"] = "desc";
  write_text(dir / "metrics.csv", "id,metric\nm0,0.1\nm1,0.9\nm2,0.5\nm3,0.3\n");
  doc["metrics_csv"] = (dir / "metrics.csv").string();
  auto r = cli({"merge", "--config", write_json("m.json", doc), "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto log = read_file(dir / "run.csv");
  EXPECT_NE(log.find("\n1,0,m1,"), std::string::npos);
  EXPECT_NE(log.find("\n4,0,m0,"), std::string::npos);
}

TEST_F(CliTest, GreedyWithNegDistance) {
  auto doc = soup_config();
  doc["ensemble"]["greedy"] = {{"evaluator", "neg_distance"}, {"target", paths[2]}};
  auto cfg = write_json("greedy.json", doc);
  auto r = cli({"greedy", "--config", cfg, "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("accepted"), std::string::npos);
  auto log = read_file(dir / "run.csv");
  EXPECT_NE(log.find(",m2,"), std::string::npos);

  auto plain = write_json("plain.json", soup_config());
  r = cli({"greedy", "--config", plain});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("evaluator"), std::string::npos);
}

TEST_F(CliTest, GreedyWithCommandEvaluator) {
  auto doc = soup_config();
  doc["ensemble"]["greedy"] = {{"evaluator", "command"}, {"command", "echo 1; true"}};
  auto r = cli({"greedy", "--config", write_json("cmd.json", doc), "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("0 accepted"), std::string::npos);
  // Every step is rejected, so the result is the soup pivot.
  EXPECT_LT(max_rel_error(load_checkpoint(dir / "merged.safetensors"), soup(maps)), 1e-6);
  EXPECT_FALSE(std::filesystem::exists(dir / "merged.candidate.safetensors"));

  doc["ensemble"]["greedy"]["command"] = "false";
  r = cli({"greedy", "--config", write_json("bad.json", doc), "--out", dir.path().string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("evaluator"), std::string::npos);
}

TEST_F(CliTest, GdPresetSweepWritesSixtyCells) {
  auto doc = soup_config();
  doc.erase("ensemble");
  doc["ensemble"] = {{"ordering", "given"}};
  doc["sweep"] = {{"preset", "gd"}};
  auto out = dir / "sweep";
  auto r = cli({"merge", "--config", write_json("sweep.json", doc), "--out", out.string(), "-q"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto index = read_file(out / "sweep_index.csv");
  EXPECT_EQ(std::count(index.begin(), index.end(), '\n'), 61);
  std::size_t checkpoints = 0, logs = 0;
  for (const auto& e : std::filesystem::directory_iterator(out)) {
    checkpoints += e.path().extension() == ".safetensors";
    logs += e.path().extension() == ".csv" && e.path().filename() != "sweep_index.csv";
  }
  EXPECT_EQ(checkpoints, 60u);
  EXPECT_EQ(logs, 60u);
}

TEST_F(CliTest, SweepCellFailureDoesNotStopOthers) {
  auto doc = soup_config();
  doc["sweep"] = {{"grid", {{"ensemble.optimizer.lr", json::array({json{{"explicit", {1.0}}}, 0.5})}}}};
  auto out = dir / "sweep";
  auto r = cli({"merge", "--config", write_json("sweep.json", doc), "--out", out.string()});
  EXPECT_EQ(r.code, 2);
  auto index = read_file(out / "sweep_index.csv");
  EXPECT_NE(index.find(",failed,"), std::string::npos);
  EXPECT_NE(index.find(",ok,"), std::string::npos);
}

TEST_F(CliTest, MissingIngredientNamesPath) {
  auto doc = soup_config();
  doc["ingredients"].push_back((dir / "nope.safetensors").string());
  auto r = cli({"merge", "--config", write_json("missing.json", doc), "--out", dir.path().string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.safetensors"), std::string::npos);
  EXPECT_EQ(cli({"merge", "--config", (dir / "absent.json").string()}).code, 2);
}

TEST_F(CliTest, ConfigViolationsListedTogether) {
  json doc = {{"version", 2},
              {"bogus", true},
              {"ingredients", json::array()},
              {"ensemble",
               {{"epochs", 0},
                {"shuffle", true},
                {"ordering", "sideways"},
                {"optimizer", {{"method", "adam"}, {"beta1", 1.5}}}}}};
  auto r = cli({"merge", "--config", write_json("bad.json", doc)});
  EXPECT_EQ(r.code, 1);
  for (const char* key : {"version", "bogus", "ingredients", "epochs", "ordering", "beta1", "seed"}) {
    EXPECT_NE(r.err.find(key), std::string::npos) << key;
  }
}

json fed_doc(const std::string& algorithm) {
  return {{"version", 1},
          {"algorithm", algorithm},
          {"seed", 5},
          {"rounds", 8},
          {"participants", 3},
          {"client_preset", {{"count", 6}, {"dimension", 3}, {"scale", 2.0}, {"local_steps", 2},
                             {"local_optimizer", {{"method", "gd"}, {"lr", 0.4}}}}},
          {"server", {{"method", "gd"}, {"lr", 1.0}}}};
}

TEST_F(CliTest, FedSoupReductionLogsMatchFedOpt) {
  auto a = dir / "opt", b = dir / "soup";
  ASSERT_EQ(cli({"fed", "--config", write_json("opt.json", fed_doc("fedopt")), "--out", a.string()}).code, 0);
  auto soup_doc = fed_doc("fedsoup");
  soup_doc["client_soup"] = "linear";
  ASSERT_EQ(cli({"fed", "--config", write_json("soup.json", soup_doc), "--out", b.string()}).code, 0);
  EXPECT_EQ(read_file(a / "rounds.csv"), read_file(b / "rounds.csv"));
  EXPECT_LT(max_rel_error(load_checkpoint(a / "fed.safetensors"), load_checkpoint(b / "fed.safetensors")),
            1e-7);
}

TEST_F(CliTest, FedHandExample) {
  json doc = {{"version", 1},
              {"algorithm", "fedsoup"},
              {"seed", 0},
              {"rounds", 1},
              {"clients", {{{"id", "a"}, {"center", {0.0, 0.0}}}, {{"id", "b"}, {"center", {2.0, 0.0}}}}}};
  ASSERT_EQ(cli({"fed", "--config", write_json("hand.json", doc), "--out", dir.path().string()}).code, 0);
  EXPECT_EQ(load_checkpoint(dir / "fed.safetensors").flatten(), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(read_file(dir / "rounds.csv"),
            "round,participants,delta_norm,distance_to_center_mean\n1,a;b,1,0\n");
}

TEST_F(CliTest, FedRejectsZeroRounds) {
  auto doc = fed_doc("fedopt");
  doc["rounds"] = 0;
  doc.erase("seed");
  auto r = cli({"fed", "--config", write_json("zero.json", doc)});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("rounds"), std::string::npos);
  EXPECT_NE(r.err.find("seed"), std::string::npos);
}

TEST_F(CliTest, SynthCycleWritesOrbit) {
  auto r = cli({"synth", "cycle", "--k", "1", "--omega", "1", "--cycles", "3", "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ostringstream expected;
  std::vector<Point2> orbit;
  for (int c = 0; c < 3; ++c) orbit.insert(orbit.end(), {{0, 1}, {-1, 0}, {0, -1}, {1, 0}});
  write_cycle_csv(orbit, expected);
  EXPECT_EQ(read_file(dir / "cycle.csv"), expected.str());
}

TEST_F(CliTest, SynthConfigExpandsToFlags) {
  auto cfg = write_json("cycle.json", {{"version", 1}, {"cycles", 2}, {"k", 2.0}});
  ASSERT_EQ(cli({"synth", "cycle", "--config", cfg, "--out", dir.path().string()}).code, 0);
  auto text = read_file(dir / "cycle.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
  ASSERT_EQ(cli({"synth", "cycle", "--config", cfg, "--cycles", "1", "--out", dir.path().string()}).code, 0);
  text = read_file(dir / "cycle.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST_F(CliTest, SynthSeedsAndErrors) {
  auto r = cli({"synth", "estimators", "--dist", "gaussian"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("seed"), std::string::npos);
  r = cli({"synth", "wlln", "--dist", "cauchy", "--seed", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("first moment undefined"), std::string::npos);
  EXPECT_EQ(cli({"synth", "convergence", "--alpha", "-0.5"}).code, 1);
  EXPECT_EQ(cli({"synth", "cycle", "--cycles", "abc"}).code, 1);
  EXPECT_EQ(cli({"nonsense"}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST_F(CliTest, SynthEstimatorsSmall) {
  auto r = cli({"synth", "estimators", "--dist", "cauchy", "--seed", "7", "--trials", "4", "--population",
                "500", "--subsample", "40", "--epochs", "5", "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto text = read_file(dir / "estimators_cauchy.csv");
  EXPECT_EQ(text.rfind("trial,soup_x,soup_y,ame_x,ame_y,dist_soup,dist_ame\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST_F(CliTest, VerifySuites) {
  for (const char* suite : {"soup-eq", "cycle", "adagrad-gd", "fed-reduction"}) {
    auto r = cli({"verify", suite});
    EXPECT_EQ(r.code, 0) << suite << r.out << r.err;
    EXPECT_NE(r.out.find("PASS"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  }
  EXPECT_EQ(cli({"verify", "nope"}).code, 1);
}

}  // namespace
}  // namespace ame
