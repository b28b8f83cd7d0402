#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "metroscm/data.hpp"
#include "metroscm/time.hpp"

namespace testing_support {

using namespace metroscm;

inline Timestamp at(const char* text) { return parse_timestamp(text); }

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("metroscm_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// One line through n stations "A", "B", ... with the given segment lengths.
inline Topology line_topology(const std::vector<double>& km, int seats = 100, double area = 50.0) {
  Topology topo;
  for (std::size_t i = 0; i <= km.size(); ++i) {
    const std::string id(1, static_cast<char>('A' + i));
    topo.stations.push_back({id, "Station " + id, 22.3 + 0.01 * static_cast<double>(i), 114.2, {}});
  }
  Line line{"L1", {}, seats, area, 300.0, {{Seconds{6 * 3600}, Seconds{24 * 3600}, 300.0}}};
  for (std::size_t i = 0; i <= km.size(); ++i) line.stations.push_back(static_cast<StationIndex>(i));
  topo.lines.push_back(line);
  for (std::size_t i = 0; i < km.size(); ++i)
    topo.edges.push_back({static_cast<StationIndex>(i), static_cast<StationIndex>(i + 1), 0, km[i]});
  topo.finalize();
  return topo;
}

/// Two crossing lines and a loop: ten stations, every pair joined by several
/// simple paths.
inline Topology toy_network() {
  Topology topo;
  for (int i = 0; i < 10; ++i) {
    const std::string id = "T" + std::to_string(i);
    topo.stations.push_back({id, id, 22.3 + 0.01 * i, 114.2 + 0.005 * i, {}});
  }
  const std::vector<HeadwayPeriod> periods{{Seconds{6 * 3600}, Seconds{24 * 3600}, 240.0}};
  topo.lines.push_back({"R", {0, 1, 2, 3, 4}, 60, 40.0, 240.0, periods});
  topo.lines.push_back({"G", {5, 6, 2, 7, 8}, 60, 40.0, 240.0, periods});
  topo.lines.push_back({"B", {1, 9, 7, 4}, 60, 40.0, 240.0, periods});
  const std::vector<Edge> edges{{0, 1, 0, 1.1}, {1, 2, 0, 0.9}, {2, 3, 0, 1.3}, {3, 4, 0, 0.7},
                                {5, 6, 1, 1.0}, {6, 2, 1, 1.2}, {2, 7, 1, 0.8}, {7, 8, 1, 1.4},
                                {1, 9, 2, 0.6}, {9, 7, 2, 0.9}, {7, 4, 2, 1.9}};
  topo.edges = edges;
  topo.finalize();
  return topo;
}

}  // namespace testing_support
