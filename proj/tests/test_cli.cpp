#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "wmlff/cli/commands.hpp"
#include "wmlff/cli/container.hpp"
#include "wmlff/cli/movielens.hpp"
#include "wmlff/errors.hpp"
#include "wmlff/features/table.hpp"

using namespace wmlff;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("wmlff_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Small planted dataset with a held-out test file.
  PlantedSpec planted(std::size_t rows = 300, std::size_t test_rows = 100) {
    PlantedSpec spec;
    spec.n_rows = rows;
    spec.cardinalities = {25, 22};
    spec.n_numeric = 2;
    spec.seed = 4;
    cmd_generate(spec, test_rows, dir_);
    return spec;
  }

  RunSettings small() const {
    RunSettings s;
    s.model.dim = 4;
    s.model.depth = 2;
    s.train.batch_size = 32;
    s.train.epochs = 2;
    s.train.seed = 3;
    return s;
  }

  TrainOutcome train_small(const fs::path& out, RunSettings settings) {
    TrainRequest req;
    req.data = dir_ / "data.csv";
    req.schema = read_schema_config(dir_ / "schema.cfg");
    req.out = out;
    req.settings = std::move(settings);
    return cmd_train(req);
  }

  fs::path dir_;
};

std::optional<fs::path> movielens_dir() {
  const char* env = std::getenv("WMLFF_DATA_DIR");
  for (const fs::path& root : {fs::path(env ? env : ""), fs::path(WMLFF_DATA_ROOT)}) {
    if (!root.empty() && fs::exists(root / "ml-100k" / "u1.base")) return root / "ml-100k";
  }
  return std::nullopt;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WMLFF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Defaults, MatchPublishedConfiguration) {
  const ModelConfig m;
  const TrainConfig t;
  EXPECT_EQ(m.dim, 32u);
  EXPECT_EQ(m.depth, 3u);
  EXPECT_EQ(m.noise_sigma, 0.5);
  EXPECT_EQ(t.batch_size, 1024u);
  EXPECT_EQ(t.epochs, 40u);
  EXPECT_EQ(t.optimizer.kind, OptimizerKind::radam);
}

TEST(Variants, ApplyOnTopOfConfig) {
  for (const auto name : kAblationVariants) {
    ModelConfig m;
    TrainConfig t;
    apply_variant(name, m, t);
    if (name == "sigma-0.3") { EXPECT_EQ(m.noise_sigma, 0.3); }
    if (name == "adamw") { EXPECT_EQ(t.optimizer.kind, OptimizerKind::adamw); }
    if (name == "no-shared") { EXPECT_EQ(m.towers, TowerLayout::independent); }
    if (name == "cosine") { EXPECT_EQ(m.head, HeadKind::cosine); }
    if (name == "kfold") { EXPECT_EQ(t.kfold.k, 10u); }
    if (name == "depth-6") { EXPECT_EQ(m.depth, 6u); }
    if (name == "dim-64") { EXPECT_EQ(m.dim, 64u); }
  }
  ModelConfig m;
  TrainConfig t;
  EXPECT_THROW(apply_variant("qhadam", m, t), UsageError);
}

TEST_F(CliTest, FitSchemaIsDeterministic) {
  planted();
  const auto schema = read_schema_config(dir_ / "schema.cfg");
  const auto a = cmd_fit_schema(dir_ / "data.csv", schema, dir_ / "a.json");
  cmd_fit_schema(dir_ / "data.csv", schema, dir_ / "b.json");
  EXPECT_EQ(slurp(dir_ / "a.json"), slurp(dir_ / "b.json"));
  EXPECT_TRUE(a.warnings().empty());
  EXPECT_EQ(load_pipeline(dir_ / "a.json").to_json(), a.to_json());
}

TEST_F(CliTest, FitSchemaRejectsEmptyAndMalformedFiles) {
  planted();
  const auto schema = read_schema_config(dir_ / "schema.cfg");
  std::ofstream(dir_ / "empty.csv").close();
  EXPECT_THROW(cmd_fit_schema(dir_ / "empty.csv", schema, dir_ / "p.json"), DataError);
  auto text = slurp(dir_ / "data.csv");
  text += "v1,v2\n";
  std::ofstream(dir_ / "bad.csv") << text;
  try {
    cmd_fit_schema(dir_ / "bad.csv", schema, dir_ / "p.json");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 302"), std::string::npos) << e.what();
  }
}

TEST_F(CliTest, TrainWritesContainerAndReport) {
  planted();
  const auto out = train_small(dir_ / "m.wmlff", small());
  EXPECT_EQ(out.settings.model.towers, TowerLayout::dual);
  EXPECT_EQ(out.settings.train.loss, LossKind::joint_bce);
  EXPECT_TRUE(out.report.get("train.click.auc").has_value());
  EXPECT_TRUE(out.report.get("train.install.nce").has_value());
  EXPECT_EQ(out.epochs.size(), 3u);
  const auto art = load_container(dir_ / "m.wmlff");
  EXPECT_EQ(art.provenance.seed, 3u);
  EXPECT_EQ(art.provenance.config_hash, run_config_hash(out.settings.model, out.settings.train));
  EXPECT_EQ(out.report.config_hash, art.provenance.config_hash);
}

TEST_F(CliTest, ContainerRoundTripIsBitIdentical) {
  planted();
  train_small(dir_ / "m.wmlff", small());
  const auto art = load_container(dir_ / "m.wmlff");
  save_container(dir_ / "copy.wmlff", art);
  EXPECT_EQ(slurp(dir_ / "m.wmlff"), slurp(dir_ / "copy.wmlff"));
  const auto again = load_container(dir_ / "copy.wmlff");
  EXPECT_EQ(again.model, art.model);
  const auto rows = read_delimited(dir_ / "test.csv");
  EXPECT_EQ(predict_table(dir_ / "m.wmlff", rows).values, predict_table(dir_ / "copy.wmlff", rows).values);
}

TEST_F(CliTest, ContainerRejectsCorruption) {
  planted();
  train_small(dir_ / "m.wmlff", small());
  auto bytes = slurp(dir_ / "m.wmlff");
  std::ofstream(dir_ / "short.wmlff", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(load_container(dir_ / "short.wmlff"), DataError);
  bytes[0] = 'X';
  std::ofstream(dir_ / "magic.wmlff", std::ios::binary) << bytes;
  EXPECT_THROW(load_container(dir_ / "magic.wmlff"), DataError);
  std::ofstream(dir_ / "trail.wmlff", std::ios::binary) << slurp(dir_ / "m.wmlff") << "x";
  EXPECT_THROW(load_container(dir_ / "trail.wmlff"), DataError);
}

TEST_F(CliTest, PredictTwiceGivesIdenticalFiles) {
  planted();
  train_small(dir_ / "m.wmlff", small());
  EXPECT_EQ(cmd_predict(dir_ / "m.wmlff", dir_ / "test.csv", dir_ / "p1.csv"), 100u);
  cmd_predict(dir_ / "m.wmlff", dir_ / "test.csv", dir_ / "p2.csv");
  EXPECT_EQ(slurp(dir_ / "p1.csv"), slurp(dir_ / "p2.csv"));
  const auto pred = read_delimited(dir_ / "p1.csv");
  EXPECT_EQ(pred.names, (std::vector<std::string>{"row_id", "p_click", "p_install"}));
  for (const auto& name : {"p_click", "p_install"}) {
    for (const auto& cell : pred.column(name)) {
      const double p = std::stod(cell);
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
  }
}

TEST_F(CliTest, SingleTaskPredictsOneColumn) {
  planted();
  auto s = small();
  s.towers_auto = false;
  s.model.towers = TowerLayout::single;
  s.loss_auto = true;
  train_small(dir_ / "m.wmlff", s);
  cmd_predict(dir_ / "m.wmlff", dir_ / "test.csv", dir_ / "p.csv");
  EXPECT_EQ(read_delimited(dir_ / "p.csv").names, (std::vector<std::string>{"row_id", "p_click"}));
}

TEST_F(CliTest, EnsembleOfIdenticalMembersEqualsMember) {
  planted();
  train_small(dir_ / "m.wmlff", small());
  save_ensemble_manifest(dir_ / "ens.json", {"m.wmlff", "m.wmlff", "m.wmlff"}, Provenance{});
  EXPECT_TRUE(is_ensemble_manifest(dir_ / "ens.json"));
  EXPECT_FALSE(is_ensemble_manifest(dir_ / "m.wmlff"));
  cmd_predict(dir_ / "m.wmlff", dir_ / "test.csv", dir_ / "single.csv");
  cmd_predict(dir_ / "ens.json", dir_ / "test.csv", dir_ / "ens.csv");
  EXPECT_EQ(slurp(dir_ / "single.csv"), slurp(dir_ / "ens.csv"));
}

TEST_F(CliTest, KFoldWritesMembersAndManifest) {
  planted();
  auto s = small();
  s.train.epochs = 1;
  s.train.kfold = {true, 10};
  const auto out = train_small(dir_ / "ens.json", s);
  EXPECT_EQ(out.written.size(), 11u);
  const auto members = read_ensemble_manifest(dir_ / "ens.json");
  ASSERT_EQ(members.size(), 10u);
  for (std::size_t j = 0; j < 10; ++j) {
    EXPECT_TRUE(fs::exists(members[j]));
    EXPECT_EQ(members[j].filename(), "ens.member" + std::to_string(j) + ".wmlff");
  }
  EXPECT_EQ(load_models(dir_ / "ens.json").members.size(), 10u);
  EXPECT_EQ(*out.report.get("members"), 10.0);
  EXPECT_EQ(cmd_predict(dir_ / "ens.json", dir_ / "test.csv", dir_ / "p.csv"), 100u);
}

TEST_F(CliTest, NoSharedVariantBuildsFourTowers) {
  planted();
  auto s = small();
  ModelConfig& m = s.model;
  apply_variant("no-shared", m, s.train);
  s.towers_auto = false;
  train_small(dir_ / "m.wmlff", s);
  const auto art = load_container(dir_ / "m.wmlff");
  EXPECT_EQ(art.model.towers().size(), 4u);
  std::set<std::size_t> used;
  for (const auto& h : art.model.heads()) {
    used.insert(h.tower_a);
    used.insert(h.tower_b);
  }
  EXPECT_EQ(used.size(), 4u);
}

TEST_F(CliTest, EvaluateBaseRateAndMismatch) {
  planted();
  const auto labels = read_delimited(dir_ / "test.csv");
  double click = 0, install = 0;
  for (const auto& c : labels.column("is_clicked")) click += std::stod(c);
  for (const auto& c : labels.column("is_installed")) install += std::stod(c);
  const double n = static_cast<double>(labels.row_count());
  Predictions base{{"p_click", "p_install"},
                   {std::vector<double>(labels.row_count(), click / n),
                    std::vector<double>(labels.row_count(), install / n)}};
  const auto r = evaluate_predictions(base, labels, EvaluateRequest{});
  EXPECT_NEAR(*r.get("click.nce"), 1.0, 1e-12);
  EXPECT_NEAR(*r.get("install.nce"), 1.0, 1e-12);
  EXPECT_NEAR(*r.get("nce"), 1.0, 1e-12);
  EXPECT_EQ(*r.get("click.auc"), 0.5);

  base.values[0].pop_back();
  base.values[1].pop_back();
  EXPECT_THROW(evaluate_predictions(base, labels, EvaluateRequest{}), DataError);
}

TEST_F(CliTest, EvaluateFromFiles) {
  planted();
  train_small(dir_ / "m.wmlff", small());
  cmd_predict(dir_ / "m.wmlff", dir_ / "test.csv", dir_ / "p.csv");
  EvaluateRequest req;
  req.predictions = dir_ / "p.csv";
  req.labels = dir_ / "test.csv";
  const auto r = cmd_evaluate(req);
  EXPECT_TRUE(r.get("click.logloss").has_value());
  EXPECT_TRUE(r.get("install.auc").has_value());
  req.labels = dir_ / "data.csv";
  EXPECT_THROW(cmd_evaluate(req), DataError);
}

TEST_F(CliTest, RegressionEvaluateReportsRmse) {
  std::ofstream(dir_ / "pred.csv") << "row_id,rating\n0,3\n1,4\n";
  std::ofstream(dir_ / "labels.csv") << "rating\n4\n4\n";
  EvaluateRequest req;
  req.predictions = dir_ / "pred.csv";
  req.labels = dir_ / "labels.csv";
  req.mode = EvalMode::regression;
  EXPECT_NEAR(*cmd_evaluate(req).get("rmse"), std::sqrt(0.5), 1e-15);
}

TEST_F(CliTest, AblationSuiteStructure) {
  planted(400, 150);
  AblateRequest req;
  req.data = dir_ / "data.csv";
  req.test = dir_ / "test.csv";
  req.schema = read_schema_config(dir_ / "schema.cfg");
  req.settings = small();
  req.settings.train.epochs = 1;
  req.out = dir_ / "ablation.tsv";
  const auto rows = cmd_ablate(req);
  ASSERT_EQ(rows.size(), 8u);
  std::set<std::string> hashes;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].variant, kAblationVariants[i]);
    EXPECT_EQ(rows[i].report.config_hash, run_config_hash(rows[i].settings.model, rows[i].settings.train));
    hashes.insert(rows[i].report.config_hash);
    EXPECT_TRUE(rows[i].report.get("click.auc").has_value()) << rows[i].variant;
    EXPECT_EQ(rows[i].tower_count, rows[i].variant == "no-shared" ? 4u : 3u);
  }
  EXPECT_EQ(hashes.size(), 8u);
  const auto table = read_delimited(dir_ / "ablation.tsv");
  EXPECT_EQ(table.row_count(), 8u);
  EXPECT_EQ(table.names.front(), "variant");
}

TEST_F(CliTest, CriteoAdapter) {
  std::ofstream raw(dir_ / "criteo.tsv");
  for (int r = 0; r < 200; ++r) {
    raw << (r % 3 == 0 ? 1 : 0);
    for (int i = 0; i < 13; ++i) raw << '\t' << (i == 2 && r % 5 == 0 ? "" : std::to_string(r * i % 17));
    for (int c = 0; c < 26; ++c) raw << '\t' << std::hex << (r * 31 + c) % 97 << std::dec;
    raw << '\n';
  }
  raw.close();
  const auto n = cmd_adapt_criteo(dir_ / "criteo.tsv", dir_ / "out", 0.5, 1);
  EXPECT_GT(n, 60u);
  EXPECT_LT(n, 140u);
  const auto t = read_delimited(dir_ / "out" / "criteo.csv");
  EXPECT_EQ(t.row_count(), n);
  EXPECT_EQ(t.column_count(), 40u);
  EXPECT_EQ(cmd_adapt_criteo(dir_ / "criteo.tsv", dir_ / "again", 0.5, 1), n);
  EXPECT_EQ(slurp(dir_ / "out" / "criteo.csv"), slurp(dir_ / "again" / "criteo.csv"));
  const auto schema = read_schema_config(dir_ / "out" / "schema.cfg");
  EXPECT_NO_THROW(cmd_fit_schema(dir_ / "out" / "criteo.csv", schema, dir_ / "p.json"));
}

TEST_F(CliTest, MovieLensAdapter) {
  const auto raw = movielens_dir();
  if (!raw) GTEST_SKIP() << "ml-100k not available";
  const auto plain = adapt_movielens(*raw, "u1", false);
  EXPECT_EQ(plain.train.row_count(), 80000u);
  EXPECT_EQ(plain.test.row_count(), 20000u);
  EXPECT_FALSE(plain.train.find("user_avg").has_value());
  const auto& m = plain.train.column("gender_m");
  const auto& f = plain.train.column("gender_f");
  for (std::size_t r = 0; r < m.size(); ++r) EXPECT_EQ(std::stod(m[r]) + std::stod(f[r]), 1.0);

  const auto biased = adapt_movielens(*raw, "u1", true);
  for (const auto* name : {"user_avg", "user_pct_std", "item_avg", "item_pct_std"}) {
    EXPECT_TRUE(biased.train.find(name).has_value()) << name;
    EXPECT_TRUE(biased.test.find(name).has_value()) << name;
  }

  write_movielens(dir_, plain);
  const auto pipeline = cmd_fit_schema(dir_ / "train.csv", read_schema_config(dir_ / "schema.cfg"), dir_ / "p.json");
  EXPECT_TRUE(pipeline.warnings().empty());
  const auto& s = pipeline.schema();
  EXPECT_EQ(s.names_with(ColumnRole::high_card_cat),
            (std::vector<std::string>{"user", "movie", "occupation", "age"}));
  EXPECT_EQ(s.count(ColumnRole::binary), 21u);
  EXPECT_EQ(s.count(ColumnRole::label_rating), 1u);
}

TEST_F(CliTest, MovieLensAdapterMissingFiles) {
  EXPECT_THROW(adapt_movielens(dir_ / "nope"), DataError);
}

TEST_F(CliTest, ExitCodes) {
  planted();
  const auto d = dir_.string();
  EXPECT_EQ(run_cli(""), kExitUsage);
  EXPECT_EQ(run_cli("train --bogus"), kExitUsage);
  EXPECT_EQ(run_cli("train --data " + d + "/missing.csv --schema " + d + "/schema.cfg --out " + d + "/m.wmlff"),
            kExitData);
  EXPECT_EQ(run_cli("predict --model " + d + "/missing.wmlff --data " + d + "/test.csv --out " + d + "/p.csv"),
            kExitData);
  EXPECT_EQ(run_cli("train --quiet --data " + d + "/data.csv --schema " + d + "/schema.cfg --out " + d +
                    "/m.wmlff --dim 4 --depth 2 --epochs 1 --batch 64"),
            kExitOk);
  EXPECT_EQ(run_cli("train --quiet --data " + d + "/data.csv --schema " + d + "/schema.cfg --out " + d +
                    "/m.wmlff --dim 4 --depth 2 --epochs 3 --lr 1e300"),
            kExitNumerical);
  EXPECT_EQ(run_cli("train --quiet --data " + d + "/data.csv --schema " + d + "/schema.cfg --out " + d +
                    "/m.wmlff --epochs 0"),
            kExitUsage);
}
