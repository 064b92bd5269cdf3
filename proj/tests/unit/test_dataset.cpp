#include "decompsens/dataset.hpp"
#include "decompsens/error.hpp"
#include "decompsens/simulate.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace decompsens;
using decompsens::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

Schema basic_schema() {
  Schema s;
  s.group_column = "R";
  s.reference_level = "wm";
  s.mediator_column = "M";
  s.outcome_column = "Y";
  return s;
}

}  // namespace

TEST(Dataset, TwoLevelEncoding) {
  TempDir dir("ds");
  write_text(dir / "d.csv", "R,M,Y\nwm,1,2\nbw,2,3\nwm,3,1\nbw,0,5\n");
  const auto d = load_csv(dir / "d.csv", basic_schema());
  ASSERT_EQ(d.indicators().cols(), 1);
  EXPECT_EQ(d.group_levels(), (std::vector<std::string>{"wm", "bw"}));
  const std::vector<double> expected{0, 1, 0, 1};
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(d.indicators()(i, 0), expected[static_cast<std::size_t>(i)]);
}

TEST(Dataset, MissingMediatorColumnNamesIt) {
  TempDir dir("ds");
  write_text(dir / "d.csv", "R,Y\nwm,2\nbw,3\n");
  try {
    load_csv(dir / "d.csv", basic_schema());
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("'M'"), std::string::npos) << e.what();
  }
}

TEST(Dataset, RoundTripOfSimulatedData) {
  auto spec = default_verification_spec();
  spec.seed = 7;
  const auto sim = generate(spec, 1000);
  std::ostringstream os;
  write_csv(sim.data, os, true);
  const auto back = encode_table(parse_csv(os.str()), schema_for(sim.data, true));
  ASSERT_EQ(back.n(), sim.data.n());
  EXPECT_EQ(back.group_levels(), sim.data.group_levels());
  EXPECT_EQ(back.group_index(), sim.data.group_index());
  EXPECT_LE((back.mediator() - sim.data.mediator()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((back.outcome() - sim.data.outcome()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((back.confounders() - sim.data.confounders()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((back.covariates() - sim.data.covariates()).cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_TRUE(back.unobserved().has_value());
  EXPECT_LE((*back.unobserved() - *sim.data.unobserved()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(back.fingerprint(), sim.data.fingerprint());
}

TEST(Dataset, ListwiseDeletionIsCounted) {
  TempDir dir("ds");
  write_text(dir / "d.csv", "R,M,Y\nwm,1,2\nbw,NA,3\nwm,3,\nbw,0,5\nwm,2,2\n");
  const auto d = load_csv(dir / "d.csv", basic_schema());
  EXPECT_EQ(d.n(), 3u);
  EXPECT_EQ(d.missing_rows_dropped(), 2u);
}

TEST(Dataset, UnparseableCellReportsRow) {
  TempDir dir("ds");
  write_text(dir / "d.csv", "R,M,Y\nwm,1,2\nbw,abc,3\n");
  try {
    load_csv(dir / "d.csv", basic_schema());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(Dataset, UnknownReferenceLevel) {
  TempDir dir("ds");
  write_text(dir / "d.csv", "R,M,Y\nwm,1,2\nbw,1,3\n");
  auto s = basic_schema();
  s.reference_level = "xx";
  EXPECT_THROW(load_csv(dir / "d.csv", s), Error);
}

TEST(Dataset, CategoricalColumnsExpandToDummies) {
  auto s = basic_schema();
  s.confounder_columns = {"edu"};
  s.categorical_columns = {"edu"};
  const auto d = encode_table(parse_csv("R,M,Y,edu\nwm,1,2,hs\nbw,2,3,ba\nwm,3,1,ms\nbw,0,5,hs\n"), s);
  ASSERT_EQ(d.confounders().cols(), 2);
  // Levels sorted: ba (dropped), hs, ms.
  EXPECT_EQ(d.names().confounders, (std::vector<std::string>{"edu=hs", "edu=ms"}));
  EXPECT_EQ(d.confounders()(0, 0), 1.0);
  EXPECT_EQ(d.confounders()(1, 0), 0.0);
  EXPECT_EQ(d.confounders()(2, 1), 1.0);
}

TEST(Dataset, QuotedCsvFields) {
  const auto t = parse_csv("a,b\n\"x,1\",\"he said \"\"hi\"\"\"\n");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][0], "x,1");
  EXPECT_EQ(t.rows[0][1], "he said \"hi\"");
}

TEST(Validate, ConstantMediatorInOneGroupIsPositivity) {
  const auto d = decompsens::testing::tiny_dataset({"a", "b", "a", "b", "a", "b"}, "a", {1, 2, 3, 2, 5, 2},
                                                   {1, 2, 3, 4, 5, 6});
  const auto findings = validate(d);
  const auto it = std::find_if(findings.begin(), findings.end(),
                               [](const Finding& f) { return f.kind == Finding::Kind::positivity; });
  ASSERT_NE(it, findings.end());
  EXPECT_EQ(it->subject, "b");
}

TEST(Validate, SimulatedDataHasNoFindings) {
  const auto sim = generate(default_verification_spec(), 2000);
  EXPECT_TRUE(validate(sim.data).empty());
}

TEST(Validate, ConstantConfounderColumn) {
  auto s = basic_schema();
  s.confounder_columns = {"X"};
  const auto d = encode_table(parse_csv("R,M,Y,X\nwm,1,2,4\nbw,2,3,4\nwm,3,1,4\nbw,0,5,4\n"), s);
  const auto findings = validate(d);
  const auto it = std::find_if(findings.begin(), findings.end(), [](const Finding& f) {
    return f.kind == Finding::Kind::constant_column && f.subject == "X";
  });
  EXPECT_NE(it, findings.end());
}

TEST(EncodedDataset, WithReferenceReordersLevels) {
  const auto d = decompsens::testing::tiny_dataset({"a", "b", "c", "a"}, "a", {1, 2, 3, 4}, {1, 2, 3, 4});
  const auto e = d.with_reference("c");
  EXPECT_EQ(e.reference_level(), "c");
  EXPECT_EQ(e.decode_labels(), d.decode_labels());
  EXPECT_THROW(d.with_reference("zz"), LookupError);
}
