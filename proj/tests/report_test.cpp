#include <gtest/gtest.h>

#include "mmp/report.hpp"

namespace mmp {
namespace {

RunRecord make_run(std::string tag, std::uint64_t seed, double base) {
  RunRecord r;
  r.tag = std::move(tag);
  r.seed = seed;
  const SubstitutionMode mode = mode_for(parse_tag(r.tag));
  const char* names[] = {"all available", "m1+m2 available", "m0+m2 available", "m0+m1 available",
                         "m2 available", "m1 available", "m0 available"};
  for (int s = 0; s < 7; ++s) {
    r.accuracy.push_back({names[s], mode, static_cast<std::size_t>(s == 0 ? 0 : (s < 4 ? 1 : 2)), base - 0.01 * s});
  }
  r.alignment.push_back({"m1+m2 available", "m0", mode, 1, 0.25, 0.5, 0.875});
  return r;
}

EvalReport sample_report() {
  EvalReport rep;
  rep.modalities = {"m0", "m1", "m2"};
  rep.runs = {make_run("dropout", 0, 0.8), make_run("dropout", 1, 0.7), make_run("ca_align", 0, 0.9)};
  return rep;
}

TEST(Report, JsonRoundTrip) {
  const EvalReport rep = sample_report();
  const std::string text = to_json_string(rep);
  const EvalReport back = parse_report(text);
  ASSERT_EQ(back.runs.size(), 3u);
  EXPECT_EQ(back.modalities, rep.modalities);
  EXPECT_EQ(back.runs[1].accuracy[3].accuracy, round9(rep.runs[1].accuracy[3].accuracy));
  EXPECT_EQ(back.runs[0].alignment[0].cosine, 0.875);
  EXPECT_EQ(to_json_string(back), text);
}

TEST(Report, JsonKeyOrderIsStable) {
  const std::string text = to_json_string(sample_report());
  EXPECT_LT(text.find("\"format\""), text.find("\"version\""));
  EXPECT_LT(text.find("\"version\""), text.find("\"modalities\""));
  EXPECT_LT(text.find("\"modalities\""), text.find("\"runs\""));
  EXPECT_LT(text.find("\"runs\""), text.find("\"summary\""));
}

TEST(Report, NineSignificantDigits) {
  EXPECT_EQ(round9(0.123456789123), 0.123456789);
  EXPECT_EQ(round9(2.0 / 3.0), 0.666666667);
  EvalReport rep = sample_report();
  rep.runs[0].accuracy[0].accuracy = 2.0 / 3.0;
  EXPECT_NE(to_json_string(rep).find("0.666666667"), std::string::npos);
}

TEST(Report, CsvLayout) {
  const std::string csv = to_csv(sample_report());
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "tag,scenario,mode,seed,metric,value");
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  EXPECT_EQ(lines, 1u + 3 * (7 + 3));
  EXPECT_NE(csv.find("dropout,all available,zero_fill,1,accuracy,0.7\n"), std::string::npos);
  EXPECT_NE(csv.find("ca_align,m1+m2 available,mmp,0,cosine:m0,0.875\n"), std::string::npos);
}

TEST(Report, SingleReportHasOneRowPerScenario) {
  EvalReport rep;
  rep.modalities = {"m0", "m1", "m2"};
  rep.runs = {make_run("ca_align", 0, 0.9)};
  const std::string out = render_report(rep);
  const std::string table = out.substr(0, out.find("missing-modality average"));
  std::size_t lines = 0;
  for (char c : table) lines += c == '\n';
  EXPECT_EQ(lines, 1u + 2 + 7);  // title, header, rule, scenarios
  EXPECT_NE(out.find("ca_align/mmp"), std::string::npos);
}

TEST(Report, IdenticalInputsRenderIdentically) {
  EXPECT_EQ(render_report(sample_report()), render_report(parse_report(to_json_string(sample_report()))));
}

TEST(Report, DuplicatedSeedsHaveZeroStd) {
  EvalReport one;
  one.modalities = {"m0", "m1", "m2"};
  one.runs = {make_run("lp", 3, 0.75)};
  const EvalReport merged = merge_reports({one, one});
  const auto s = summarize_accuracy(merged);
  for (const auto& [key, cell] : s.cells) {
    EXPECT_EQ(cell.n, 2u);
    EXPECT_EQ(cell.std, 0.0);
  }
  EXPECT_NE(render_report(merged).find("75.00±0.00"), std::string::npos);
}

TEST(Report, MeanAndSampleStd) {
  const auto s = summarize_accuracy(sample_report());
  const auto cell = s.cells.at({"all available", Column{"dropout", "zero_fill"}});
  EXPECT_NEAR(cell.mean, 0.75, 1e-12);
  EXPECT_NEAR(cell.std, std::sqrt(0.005), 1e-12);
  // Missing average of a run: mean of its six missing scenarios.
  const auto miss = s.missing_average.at(Column{"ca_align", "mmp"});
  EXPECT_NEAR(miss.mean, 0.9 - 0.01 * 3.5, 1e-12);
}

TEST(Report, MalformedDocumentsAreRejected) {
  EXPECT_THROW(parse_report("{"), ValidationError);
  EXPECT_THROW(parse_report("{\"format\": \"other\", \"version\": 1}"), ValidationError);
  EXPECT_THROW(parse_report("{\"format\": \"mmp-eval-report\", \"version\": 1}"), ValidationError);
  std::string text = to_json_string(sample_report());
  text.replace(text.find("\"zero_fill\""), 11, "\"sideways\"");
  EXPECT_THROW(parse_report(text), ValidationError);
  EvalReport bad = sample_report();
  bad.runs[0].accuracy[0].accuracy = 1.5;
  EXPECT_THROW(parse_report(to_json_string(bad)), ValidationError);
  EvalReport other = sample_report();
  other.modalities = {"a", "b", "c"};
  EXPECT_THROW(merge_reports({sample_report(), other}), ValidationError);
}

}  // namespace
}  // namespace mmp
