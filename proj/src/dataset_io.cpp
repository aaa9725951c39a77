#include "fusdom/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "fusdom/rng.hpp"

namespace fusdom {

namespace {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw IoError("failed to format a double");
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("dataset: bad number '" + std::string(s) + "' in " + context);
  }
  return v;
}

long parse_long(std::string_view s, const std::string& context) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("dataset: bad integer '" + std::string(s) + "' in " + context);
  }
  return v;
}

std::uint64_t parse_u64(std::string_view s, const std::string& context) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("dataset: bad integer '" + std::string(s) + "' in " + context);
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "#fusdom-dataset v" << dataset.header.version
      << " frame_dim=" << dataset.header.frame_dim
      << " vocab_size=" << dataset.header.vocab_size
      << " frames_per_token=" << dataset.header.frames_per_token
      << " domain=" << dataset.header.domain_id << " split=" << dataset.header.split
      << "\n";
  for (const GeneratedUtterance& u : dataset.utterances) {
    out << u.domain_id << '\t' << u.seed << '\t';
    if (u.tokens.empty()) {
      out << '-';
    } else {
      for (std::size_t i = 0; i < u.tokens.size(); ++i) {
        if (i) out << ',';
        out << u.tokens[i];
      }
    }
    out << '\t' << u.frames.rows() << '\t';
    for (Index i = 0; i < u.frames.rows(); ++i) {
      for (Index j = 0; j < u.frames.cols(); ++j) {
        if (i || j) out << ' ';
        out << format_double(u.frames(i, j));
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("#fusdom-dataset v")) {
    throw DataError("dataset: missing header line in " + path.string());
  }
  Dataset ds;
  {
    std::istringstream hs(line.substr(1));
    std::string field;
    hs >> field;  // fusdom-dataset
    hs >> field;
    ds.header.version = static_cast<int>(parse_long(field.substr(1), "header version"));
    while (hs >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw DataError("dataset: bad header field " + field);
      const std::string key = field.substr(0, eq);
      const std::string val = field.substr(eq + 1);
      if (key == "frame_dim") ds.header.frame_dim = static_cast<int>(parse_long(val, key));
      else if (key == "vocab_size") ds.header.vocab_size = static_cast<int>(parse_long(val, key));
      else if (key == "frames_per_token") ds.header.frames_per_token = static_cast<int>(parse_long(val, key));
      else if (key == "domain") ds.header.domain_id = val;
      else if (key == "split") ds.header.split = val;
      else throw DataError("dataset: unknown header field '" + key + "'");
    }
  }
  if (ds.header.version != 1) {
    throw DataError("dataset: unsupported version " + std::to_string(ds.header.version));
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    auto cols = split(line, '\t');
    if (cols.size() != 5) {
      throw DataError("dataset: expected 5 tab-separated fields in " + where);
    }
    GeneratedUtterance u;
    u.domain_id = std::string(cols[0]);
    u.seed = parse_u64(cols[1], where);
    if (cols[2] != "-") {
      for (auto tok : split(cols[2], ',')) {
        u.tokens.push_back(static_cast<int>(parse_long(tok, where)));
      }
    }
    const long n_frames = parse_long(cols[3], where);
    auto values = split(cols[4], ' ');
    if (n_frames < 1 || values.size() % static_cast<std::size_t>(n_frames) != 0) {
      throw DataError("dataset: frame count mismatch in " + where);
    }
    const auto frame_dim = static_cast<Index>(values.size() / static_cast<std::size_t>(n_frames));
    if (frame_dim != ds.header.frame_dim) {
      throw DataError("dataset: frame_dim mismatch in " + where);
    }
    u.frames = Matrix(n_frames, frame_dim);
    std::size_t k = 0;
    for (Index i = 0; i < u.frames.rows(); ++i)
      for (Index j = 0; j < u.frames.cols(); ++j)
        u.frames(i, j) = parse_double(values[k++], where);
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

CorpusPaths build_corpus(const DomainSpec& spec, const CorpusSizes& sizes,
                         std::uint64_t master_seed, const std::filesystem::path& out_dir) {
  if (sizes.pretrain_n < 0 || sizes.train_n < 0 || sizes.dev_n < 0 || sizes.test_n < 0) {
    throw ConfigError("build_corpus: split sizes must be >= 0");
  }
  spec.validate();
  std::filesystem::create_directories(out_dir);

  std::unordered_set<std::uint64_t> used_seeds;
  auto make_split = [&](const std::string& split, std::uint64_t split_id, int count,
                        bool labeled) {
    Dataset ds;
    ds.header.frame_dim = spec.frame_dim();
    ds.header.vocab_size = spec.vocab_size;
    ds.header.frames_per_token = spec.frames_per_token;
    ds.header.domain_id = spec.domain_id;
    ds.header.split = split;
    for (int i = 0; i < count; ++i) {
      const std::uint64_t seed =
          derive_seed({hash_name("corpus"), master_seed, hash_name(spec.domain_id),
                       split_id, static_cast<std::uint64_t>(i)});
      if (!used_seeds.insert(seed).second) {
        throw DataError("build_corpus: utterance seed collision in domain '" +
                        spec.domain_id + "'");
      }
      ds.utterances.push_back(sample_utterance(spec, seed, labeled));
    }
    const std::filesystem::path path = out_dir / (spec.domain_id + "_" + split + ".tsv");
    write_dataset(ds, path);
    return path;
  };

  CorpusPaths paths;
  paths.pretrain = make_split("pretrain", 0, sizes.pretrain_n, false);
  paths.train = make_split("train", 1, sizes.train_n, true);
  paths.dev = make_split("dev", 2, sizes.dev_n, true);
  paths.test = make_split("test", 3, sizes.test_n, true);
  return paths;
}

std::vector<Matrix> unlabeled_frames(const Dataset& dataset) {
  std::vector<Matrix> out;
  out.reserve(dataset.utterances.size());
  for (const GeneratedUtterance& u : dataset.utterances) out.push_back(u.frames);
  return out;
}

std::vector<LabeledUtterance> labeled_utterances(const Dataset& dataset) {
  std::vector<LabeledUtterance> out;
  out.reserve(dataset.utterances.size());
  for (const GeneratedUtterance& u : dataset.utterances) {
    if (u.tokens.empty()) {
      throw DataError("dataset: unlabeled record where labels are required (domain " +
                      u.domain_id + ", seed " + std::to_string(u.seed) + ")");
    }
    out.push_back(LabeledUtterance{u.frames, u.tokens});
  }
  return out;
}

}  // namespace fusdom
