#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fusdom/datagen.hpp"
#include "fusdom/downstream.hpp"

namespace fusdom {

struct DatasetHeader {
  int version = 1;
  int frame_dim = 0;
  int vocab_size = 0;
  int frames_per_token = 0;
  std::string domain_id;
  std::string split;
};

struct Dataset {
  DatasetHeader header;
  std::vector<GeneratedUtterance> utterances;
};

/// Line-oriented text format: one header line carrying generator metadata,
/// then one record per line (domain, seed, token ids or '-', frame count,
/// row-major frame values with shortest round-trip formatting).
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct CorpusSizes {
  int pretrain_n = 0;  // unlabeled
  int train_n = 0;
  int dev_n = 0;
  int test_n = 0;
};

struct CorpusPaths {
  std::filesystem::path pretrain;
  std::filesystem::path train;
  std::filesystem::path dev;
  std::filesystem::path test;
};

/// Writes the four split files for one domain. Utterance seeds are derived
/// from disjoint per-split streams and asserted unique across the corpus.
CorpusPaths build_corpus(const DomainSpec& spec, const CorpusSizes& sizes,
                         std::uint64_t master_seed, const std::filesystem::path& out_dir);

std::vector<Matrix> unlabeled_frames(const Dataset& dataset);
std::vector<LabeledUtterance> labeled_utterances(const Dataset& dataset);

}  // namespace fusdom
