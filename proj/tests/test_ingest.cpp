#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ews/ingest.hpp"

using namespace ews;
using namespace ews::ingest;

namespace {

struct TempDir {
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("ews_ingest_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path path;
};

CalibrationTable full_table() {
  CalibrationTable t;
  t.set({SensorKind::RainGauge, 0.2, 0.0});
  t.set({SensorKind::Piezometer, 0.01, -3.5});
  t.set({SensorKind::Extensometer, 0.1, 0.0});
  t.set({SensorKind::Inclinometer, 0.001, 0.0});
  t.set({SensorKind::Tiltmeter, 0.001, 0.0});
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Calibrate, Examples) {
  EXPECT_EQ(calibrate({1, 1, 0, SensorKind::Piezometer, 42}, {SensorKind::Piezometer, 1, 0}).value, 42.0);
  EXPECT_DOUBLE_EQ(calibrate({1, 1, 0, SensorKind::RainGauge, 5}, {SensorKind::RainGauge, 0.2, 0}).value, 1.0);
  EXPECT_DOUBLE_EQ(calibrate({1, 1, 0, SensorKind::Piezometer, 400}, {SensorKind::Piezometer, 0.01, -3.5}).value,
                   0.5);
}

TEST(Calibrate, CopiesIdentityAndRejectsMismatch) {
  const auto c = calibrate({9, 77, 1234, SensorKind::Tiltmeter, 10}, {SensorKind::Tiltmeter, 2, 1});
  EXPECT_EQ(c.node_id, 9);
  EXPECT_EQ(c.seq, 77u);
  EXPECT_EQ(c.timestamp, 1234);
  EXPECT_EQ(c.sensor, SensorKind::Tiltmeter);
  EXPECT_THROW(calibrate({1, 1, 0, SensorKind::Tiltmeter, 1}, {SensorKind::RainGauge, 1, 0}), CalibrationError);
  CalibrationTable t;
  EXPECT_THROW(t.set({SensorKind::RainGauge, 0.0, 0}), CalibrationError);
}

TEST(Calibrate, AffineInRaw) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> g(-5, 5);
  for (int i = 0; i < 100; ++i) {
    const CalibrationConstants c{SensorKind::Extensometer, g(rng) + 10, g(rng)};
    const double a = calibrate({1, 1, 0, SensorKind::Extensometer, -100}, c).value;
    const double b = calibrate({1, 1, 0, SensorKind::Extensometer, 0}, c).value;
    const double d = calibrate({1, 1, 0, SensorKind::Extensometer, 100}, c).value;
    EXPECT_NEAR(d - b, b - a, 1e-9);
  }
}

TEST(TipsToMm, Conversion) {
  EXPECT_DOUBLE_EQ(tips_to_mm(60, 0.2), 12.0);
  EXPECT_THROW(tips_to_mm(1, 0.0), CalibrationError);
  EXPECT_THROW(tips_to_mm(-1, 0.2), InvalidInput);
}

TEST(Ingest, DedupExamples) {
  Repository repo;
  const auto table = full_table();
  wire::SendDataPayload p{1, 10, 500, {{SensorKind::RainGauge, 1}, {SensorKind::Piezometer, 2}, {SensorKind::Tiltmeter, 3}}};
  EXPECT_EQ(ingest_batch(repo, p, 1, table), 3u);
  EXPECT_EQ(ingest_batch(repo, p, 1, table), 0u);
  wire::SendDataPayload q{1, 12, 500, {{SensorKind::Tiltmeter, 3}, {SensorKind::RainGauge, 4}, {SensorKind::RainGauge, 5}}};
  EXPECT_EQ(ingest_batch(repo, q, 1, table), 2u);
  EXPECT_EQ(repo.size(), 5u);
  EXPECT_TRUE(repo.contains(1, 14));
  EXPECT_FALSE(repo.contains(2, 14));
  // Same seq from another node is a different record.
  EXPECT_EQ(ingest_batch(repo, q, 2, table), 3u);
}

TEST(Ingest, MissingCalibrationRejectsBatch) {
  Repository repo;
  CalibrationTable partial;
  partial.set({SensorKind::RainGauge, 0.2, 0});
  wire::SendDataPayload p{1, 1, 500, {{SensorKind::RainGauge, 1}, {SensorKind::Piezometer, 2}}};
  EXPECT_THROW(ingest_batch(repo, p, 1, partial), ConfigError);
  EXPECT_EQ(repo.size(), 0u);
}

TEST(Repository, QueryRange) {
  Repository repo;
  EXPECT_TRUE(repo.query_range(0, 100).empty());
  std::vector<CalibratedReading> r = {
      {1, 3, SensorKind::RainGauge, 1.0, 3}, {2, 2, SensorKind::Piezometer, 2.0, 1},
      {1, 2, SensorKind::RainGauge, 3.0, 2}, {1, 1, SensorKind::Piezometer, 4.0, 1}};
  EXPECT_EQ(repo.append(r), 4u);
  const auto got = repo.query_range(2, 3);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0].node_id, 1);
  EXPECT_EQ(got[0].timestamp, 2);
  EXPECT_EQ(got[1].node_id, 2);
  EXPECT_EQ(got[2].timestamp, 3);
  EXPECT_EQ(repo.query_range(0, 10, SensorKind::Piezometer).size(), 2u);
  EXPECT_THROW(repo.query_range(5, 4), InvalidInput);
  EXPECT_EQ(repo.latest_timestamp(), 3);
}

TEST(Repository, SortedUniqueUnderRandomAppends) {
  Repository repo;
  std::mt19937_64 rng(17);
  std::set<std::pair<NodeId, Seq>> keys;
  for (int round = 0; round < 50; ++round) {
    std::vector<CalibratedReading> batch;
    for (int i = 0; i < 40; ++i) {
      const NodeId n = static_cast<NodeId>(rng() % 3);
      const Seq s = static_cast<Seq>(rng() % 400);
      batch.push_back({n, static_cast<Timestamp>(rng() % 100), SensorKind::RainGauge, 0.0, s});
    }
    std::size_t fresh = 0;
    for (const auto& b : batch) fresh += keys.insert({b.node_id, b.seq}).second;
    EXPECT_EQ(repo.append(batch), fresh);
  }
  const auto all = repo.query_range(0, 100);
  EXPECT_EQ(all.size(), keys.size());
  for (std::size_t i = 1; i < all.size(); ++i) {
    EXPECT_LE(std::tie(all[i - 1].timestamp, all[i - 1].node_id, all[i - 1].seq),
              std::tie(all[i].timestamp, all[i].node_id, all[i].seq));
  }
}

TEST(Repository, ReloadIsByteIdentical) {
  TempDir dir;
  std::string before;
  {
    Repository repo(dir.path);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> v(-1000, 1000);
    std::vector<CalibratedReading> r;
    for (Seq s = 1; s <= 300; ++s) {
      r.push_back({static_cast<NodeId>(s % 4), static_cast<Timestamp>(1270080000 + s / 5), kAllSensors[s % 5], v(rng), s});
    }
    repo.append(r);
    std::ostringstream out;
    write_records(out, repo.query_range(0, std::numeric_limits<Timestamp>::max()));
    before = out.str();
  }
  Repository again(dir.path);
  EXPECT_TRUE(again.load_warnings().empty());
  EXPECT_EQ(again.size(), 300u);
  std::ostringstream out;
  write_records(out, again.query_range(0, std::numeric_limits<Timestamp>::max()));
  EXPECT_EQ(out.str(), before);
  // Reloaded dedup index still rejects old keys.
  EXPECT_EQ(again.append(std::vector<CalibratedReading>{{1, 1270080000, SensorKind::RainGauge, 0.0, 1}}), 0u);
}

TEST(Repository, TornAndCorruptRowsAreSkipped) {
  TempDir dir;
  std::filesystem::create_directories(dir.path);
  {
    std::ofstream out(dir.path / "readings.csv");
    out << kReadingsHeader << "\n"
        << "100,1,RainGauge,1,0.2\n"
        << "garbage\n"
        << "101,1,Piezometer,2,5.5\n"
        << "102,1,RainGa";
  }
  Repository repo(dir.path);
  EXPECT_EQ(repo.size(), 2u);
  EXPECT_EQ(repo.parsed_rows(), 2u);
  EXPECT_EQ(repo.load_warnings().size(), 2u);
  repo.append(std::vector<CalibratedReading>{{1, 103, SensorKind::RainGauge, 0.4, 3}});
  Repository again(dir.path);
  EXPECT_EQ(again.size(), 3u);
  EXPECT_TRUE(again.contains(1, 3));
}

TEST(Repository, FormatRecord) {
  EXPECT_EQ(format_record({3, 1270080000, SensorKind::Piezometer, 0.1, 12}), "1270080000,3,Piezometer,12,0.1");
}
