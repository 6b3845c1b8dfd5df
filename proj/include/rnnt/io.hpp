#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "rnnt/data.hpp"

namespace rnnt {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Log verbosity from RNNT_LOG (0 = quiet, 1 = info, 2 = debug); default info.
inline int log_level() {
  static const int level = [] {
    const char* v = std::getenv("RNNT_LOG");
    if (!v || !*v) return 1;
    return std::atoi(v);
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "[rnnt] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::fprintf(stderr, "[rnnt:debug] %s\n", msg.c_str());
}

// ===== low-level little-endian binary helpers =====

namespace detail {

template <typename T>
inline void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
inline T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError(std::string("truncated read: ") + what);
  return v;
}

}  // namespace detail

// ===== feature files: u32 T, u32 d, then T*d float32 row-major =====

inline void write_feature_file(const std::string& path, const Mat<float>& frames) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  detail::write_pod(os, static_cast<uint32_t>(frames.rows));
  detail::write_pod(os, static_cast<uint32_t>(frames.cols));
  os.write(reinterpret_cast<const char*>(frames.v.data()),
           static_cast<std::streamsize>(frames.v.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path);
}

inline Mat<float> read_feature_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  const auto t = detail::read_pod<uint32_t>(is, "frame count");
  const auto d = detail::read_pod<uint32_t>(is, "feature dim");
  if (t == 0 || d == 0 || t > (1u << 24) || d > (1u << 16)) {
    throw IoError("implausible feature header in " + path);
  }
  Mat<float> frames(static_cast<int>(t), static_cast<int>(d));
  is.read(reinterpret_cast<char*>(frames.v.data()),
          static_cast<std::streamsize>(frames.v.size() * sizeof(float)));
  if (!is) throw IoError("truncated feature payload in " + path);
  return frames;
}

// ===== manifests: one "id<TAB>feature-file<TAB>transcript" per line =====
// Transcripts are space-separated unit IDs. Relative feature paths resolve
// against the manifest's directory.

struct ManifestEntry {
  std::string id;
  std::string feature_path;
  Labels transcript;
};

inline Labels parse_transcript(const std::string& text) {
  Labels out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    size_t used = 0;
    int v;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      throw IoError("bad transcript token: '" + tok + "'");
    }
    if (used != tok.size() || v < 1) throw IoError("bad transcript token: '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

inline std::string format_transcript(const Labels& y) {
  std::string out;
  for (size_t i = 0; i < y.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(y[i]);
  }
  return out;
}

inline std::string dirname_of(const std::string& path) {
  const size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string(".") : path.substr(0, slash);
}

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  const std::string base = dirname_of(path);
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw IoError("manifest line " + std::to_string(lineno) + ": expected id\\tfile\\ttranscript");
    }
    ManifestEntry e;
    e.id = line.substr(0, t1);
    e.feature_path = line.substr(t1 + 1, t2 - t1 - 1);
    if (!e.feature_path.empty() && e.feature_path[0] != '/') {
      e.feature_path = base + "/" + e.feature_path;
    }
    e.transcript = parse_transcript(line.substr(t2 + 1));
    out.push_back(std::move(e));
  }
  return out;
}

// Writes a dataset as feature files plus a manifest into `dir` (which must
// exist); returns the manifest path.
inline std::string write_dataset(const Dataset<float>& data, const std::string& dir,
                                 const std::string& manifest_name = "manifest.tsv") {
  const std::string manifest_path = dir + "/" + manifest_name;
  std::ofstream mf(manifest_path);
  if (!mf) throw IoError("cannot open for write: " + manifest_path);
  for (const auto& utt : data) {
    const std::string feat_rel = utt.id + ".feat";
    write_feature_file(dir + "/" + feat_rel, utt.features.frames);
    mf << utt.id << '\t' << feat_rel << '\t' << format_transcript(utt.labels) << '\n';
  }
  if (!mf) throw IoError("manifest write failed: " + manifest_path);
  return manifest_path;
}

inline Dataset<float> load_dataset(const std::string& manifest_path, double frame_period = 0.03) {
  Dataset<float> out;
  for (const auto& e : load_manifest(manifest_path)) {
    Utterance<float> utt;
    utt.id = e.id;
    utt.features.frames = read_feature_file(e.feature_path);
    utt.features.frame_period = frame_period;
    utt.labels = e.transcript;
    out.push_back(std::move(utt));
  }
  return out;
}

}  // namespace rnnt
