#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vcgsa/data_model.hpp"
#include "vcgsa/errors.hpp"
#include "vcgsa/io.hpp"

using namespace vcgsa;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// Literal step-up rule, for cross-checking the library implementation.
std::vector<double> bh_reference(std::vector<double> p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> ord(m);
  for (std::size_t i = 0; i < m; ++i) ord[i] = i;
  std::sort(ord.begin(), ord.end(),
            [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double best = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    best = std::min(best, p[ord[k]] * double(m) / double(k + 1));
    adj[ord[k]] = best;
  }
  return adj;
}

} // namespace

TEST_CASE("bh_adjust matches the hand example and basic edge cases") {
  std::vector<double> adj = bh_adjust({0.01, 0.02, 0.03});
  REQUIRE(adj.size() == 3);
  CHECK(adj[0] == doctest::Approx(0.03));
  CHECK(adj[1] == doctest::Approx(0.03));
  CHECK(adj[2] == doctest::Approx(0.03));

  CHECK(bh_adjust({0.42})[0] == doctest::Approx(0.42));

  std::vector<double> ones = bh_adjust({1.0, 1.0, 1.0, 1.0});
  for (double v : ones) CHECK(v == 1.0);

  CHECK(bh_adjust({}).empty());
  CHECK_THROWS_AS(bh_adjust({0.5, 1.5}), ValidationError);
  CHECK_THROWS_AS(bh_adjust({-0.1}), ValidationError);
}

TEST_CASE("bh_adjust agrees with a direct step-up computation") {
  std::mt19937 gen(99);
  std::uniform_real_distribution<double> U(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(17);
    for (double& v : p) v = U(gen);
    std::vector<double> a = bh_adjust(p);
    std::vector<double> b = bh_reference(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
      CHECK(a[i] >= p[i]);
      CHECK(a[i] <= 1.0);
    }
  }
}

TEST_CASE("format_number uses 10 significant digits and a scientific floor") {
  CHECK(format_number(std::nan("")) == "NA");
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(0.1234567890123) == "0.123456789");
  CHECK(format_number(3.0) == "3");
  // Below 1e-4 the representation switches to scientific notation.
  CHECK(format_number(5e-5) == "5.000000000e-05");
  CHECK(format_number(1e-4) == "0.0001");
  CHECK(format_number(-2.5e-7) == "-2.500000000e-07");
}

TEST_CASE("counts TSV round trips and flags malformed input") {
  const std::string path = "io_counts_tmp.tsv";
  write_file(path, "gene\tsA\tsB\tsC\ng1\t0\t5\t7\ng2\t10\t3\t1\n");
  CountMatrix cm = read_counts_tsv(path);
  REQUIRE(cm.gene_ids == std::vector<std::string>{"g1", "g2"});
  REQUIRE(cm.sample_ids == std::vector<std::string>{"sA", "sB", "sC"});
  CHECK(cm.counts(0, 0) == 0.0);
  CHECK(cm.counts(0, 2) == 7.0);
  CHECK(cm.counts(1, 1) == 3.0);

  write_file(path, "gene\tsA\tsB\ng1\t1\n");
  CHECK_THROWS_WITH_AS(read_counts_tsv(path),
                       doctest::Contains("line 2"), ValidationError);

  write_file(path, "gene\tsA\ng1\t-3\n");
  CHECK_THROWS_AS(read_counts_tsv(path), ValidationError);

  write_file(path, "gene\tsA\ng1\t2.5\n");
  CHECK_THROWS_AS(read_counts_tsv(path), ValidationError);

  write_file(path, "gene\tsA\ng1\tabc\n");
  CHECK_THROWS_WITH_AS(read_counts_tsv(path),
                       doctest::Contains("non-numeric"), ValidationError);

  write_file(path, "");
  CHECK_THROWS_AS(read_counts_tsv(path), ValidationError);
  std::remove(path.c_str());

  CHECK_THROWS_AS(read_counts_tsv("no_such_file.tsv"), ValidationError);
}

TEST_CASE("metadata TSV round trips covariates and validates the header") {
  const std::string path = "io_meta_tmp.tsv";
  write_file(path,
             "sample_id\tsubject_id\ttime\tage\tdose\n"
             "sA\tp1\t0\t61\t1.5\n"
             "sB\tp1\t1.5\t61\t1.5\n");
  std::vector<SampleInfo> meta = read_meta_tsv(path);
  REQUIRE(meta.size() == 2);
  CHECK(meta[0].sample_id == "sA");
  CHECK(meta[1].subject_id == "p1");
  CHECK(meta[1].time == 1.5);
  REQUIRE(meta[0].covariates.size() == 2);
  CHECK(meta[0].covariates[0] == 61.0);
  CHECK(meta[0].covariates[1] == 1.5);

  write_file(path, "sample\tsubject_id\ttime\nsA\tp1\t0\n");
  CHECK_THROWS_AS(read_meta_tsv(path), ValidationError);

  write_file(path, "sample_id\tsubject_id\ttime\nsA\tp1\tzero\n");
  CHECK_THROWS_WITH_AS(read_meta_tsv(path), doctest::Contains("line 2"),
                       ValidationError);

  write_file(path, "sample_id\tsubject_id\ttime\nsA\tp1\n");
  CHECK_THROWS_AS(read_meta_tsv(path), ValidationError);
  std::remove(path.c_str());
}

TEST_CASE("GMT parsing matches, deduplicates and skips with warnings") {
  const std::string path = "io_gmt_tmp.gmt";
  const std::vector<std::string> ids = {"g1", "g2", "g3", "g4"};
  write_file(path,
             "SETA\tdesc\tg1\tg2\n"
             "SETB\tdesc\tg3\tg3\tg4\tgX\n"
             "MISSING\tdesc\tnope1\tnope2\n"
             "TOOFEW\tdesc\tg1\tzzz\n");
  GmtResult res = read_gmt(path, ids);
  REQUIRE(res.sets.size() == 2);
  CHECK(res.sets[0].name == "SETA");
  CHECK(res.sets[0].gene_indices == std::vector<int>{0, 1});
  CHECK(res.sets[1].name == "SETB");
  CHECK(res.sets[1].gene_indices == std::vector<int>{2, 3});

  auto has_warning = [&](const std::string& needle) {
    for (const std::string& w : res.warnings)
      if (w.find(needle) != std::string::npos) return true;
    return false;
  };
  CHECK(has_warning("duplicate gene g3"));
  CHECK(has_warning("unmatched"));
  CHECK(has_warning("MISSING"));
  CHECK(has_warning("TOOFEW"));
  CHECK(has_warning("fewer than 2"));

  write_file(path, "ONLYNAME\tdesc\n");
  CHECK_THROWS_AS(read_gmt(path, ids), ValidationError);
  std::remove(path.c_str());
}

namespace {

TestResult make_result(const std::string& name, double stat, double p_asym,
                       double p_perm, bool with_perm) {
  TestResult r;
  r.set_name = name;
  r.genes_matched = 4;
  r.statistic = stat;
  r.mixing_eigenvalues = {1.5, 0.5};
  r.p_asymptotic = p_asym;
  if (with_perm) {
    r.p_permutation = p_perm;
    r.n_permutations = 100;
  }
  return r;
}

} // namespace

TEST_CASE("result writer emits the documented schema") {
  const std::string path = "io_results_tmp.tsv";
  RunMeta meta;
  meta.seed = 4242;
  meta.flags["mode"] = "hetero";
  meta.timestamp = "2026-01-01T00:00:00Z";

  SUBCASE("empty table writes only the header") {
    write_results({}, path, meta);
    std::vector<std::string> ls = lines_of(slurp(path));
    REQUIRE(ls.size() == 1);
    CHECK(ls[0] ==
          "set\tp_genes_matched\tmode\tstatistic\tdf_proxy\tp_raw\t"
          "p_adjusted\ttest_kind\tB\tseed\tp_asymptotic\tp_permutation");
  }

  SUBCASE("permutation p wins the raw column; BH fills the adjusted one") {
    std::vector<TestResult> rows;
    rows.push_back(make_result("alpha", 3.0, 0.5, 0.01, true));
    rows.push_back(make_result("beta", 1.0, 0.02, 0.0, false));
    rows.push_back(make_result("gamma", 2.0, 0.9, 0.03, true));
    write_results(rows, path, meta);
    std::vector<std::string> ls = lines_of(slurp(path));
    REQUIRE(ls.size() == 4);

    auto fields = [&](std::size_t r) {
      std::vector<std::string> out;
      std::istringstream in(ls[r]);
      std::string tok;
      while (std::getline(in, tok, '\t')) out.push_back(tok);
      return out;
    };
    std::vector<std::string> a = fields(1), b = fields(2), c = fields(3);
    CHECK(a[0] == "alpha");
    CHECK(a[1] == "4");
    CHECK(a[2] == "hetero");
    CHECK(a[4] == "2"); // eigenvalue sum 1.5 + 0.5
    CHECK(a[5] == "0.01");
    CHECK(b[5] == "0.02"); // falls back to the asymptotic p
    CHECK(c[5] == "0.03");
    // BH over (0.01, 0.02, 0.03) is 0.03 everywhere.
    CHECK(a[6] == "0.03");
    CHECK(b[6] == "0.03");
    CHECK(c[6] == "0.03");
    CHECK(a[7] == "both");
    CHECK(b[7] == "asymptotic");
    CHECK(a[8] == "100");
    CHECK(b[8] == "NA");
    CHECK(a[9] == "4242");
    CHECK(a[10] == "0.5");
    CHECK(a[11] == "0.01");
    CHECK(b[11] == "NA");
  }

  SUBCASE("rewriting identical results is byte-identical") {
    std::vector<TestResult> rows;
    rows.push_back(make_result("alpha", 3.14159, 0.25, 0.1, true));
    write_results(rows, path, meta);
    std::string first = slurp(path);
    std::string side1 = slurp(path + ".json");
    write_results(rows, path, meta);
    CHECK(slurp(path) == first);
    CHECK(slurp(path + ".json") == side1);
    CHECK(side1.find("4242") != std::string::npos);
    CHECK(side1.find("timestamp") != std::string::npos);
  }

  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}

TEST_CASE("results survive a read back at printed precision") {
  const std::string path = "io_roundtrip_tmp.tsv";
  RunMeta meta;
  meta.seed = 7;
  std::vector<TestResult> rows;
  rows.push_back(make_result("s", 0.123456789012345, 0.000012345678, 0, false));
  write_results(rows, path, meta);
  std::vector<std::string> ls = lines_of(slurp(path));
  std::istringstream in(ls[1]);
  std::string tok;
  std::vector<std::string> f;
  while (std::getline(in, tok, '\t')) f.push_back(tok);
  double stat = std::stod(f[3]);
  double p = std::stod(f[5]);
  CHECK(stat == doctest::Approx(0.123456789012345).epsilon(1e-9));
  CHECK(p == doctest::Approx(0.000012345678).epsilon(1e-9));
  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}

TEST_CASE("study table serialization") {
  StudyRow r1;
  r1.param = 0.5;
  r1.strategy = WeightStrategy::GeneLevel;
  r1.test = TestKind::Asymptotic;
  r1.replicates = 200;
  r1.rejections = 12;
  StudyRow r2;
  r2.param = 1.0;
  r2.strategy = WeightStrategy::Identity;
  r2.test = TestKind::Permutation;
  r2.replicates = 200;
  r2.rejections = 50;

  std::string text = study_csv_text({r1, r2});
  std::vector<std::string> ls = lines_of(text);
  REQUIRE(ls.size() == 3);
  CHECK(ls[0] == "param,strategy,test,replicates,rejections,rate,se");
  CHECK(ls[1] == "0.5,gene,asymptotic,200,12,0.06," + format_number(r1.se()));
  CHECK(ls[2] ==
        "1,identity,permutation,200,50,0.25," + format_number(r2.se()));

  const std::string path = "io_study_tmp.csv";
  write_study_csv({r1, r2}, path);
  CHECK(slurp(path) == text);
  std::remove(path.c_str());
}
