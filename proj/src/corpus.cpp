// seqconf/corpus.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "seqconf/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seqconf/kvconfig.hpp"

namespace seqconf {

namespace fs = std::filesystem;

Task parse_task(const std::string& name) {
  if (name == "copy") return Task::kCopy;
  if (name == "reverse") return Task::kReverse;
  if (name == "vocabulary-substitution" || name == "substitution") return Task::kSubstitution;
  throw std::runtime_error("unknown task: " + name +
                           " (expected copy, reverse, or vocabulary-substitution)");
}

std::string task_name(Task task) {
  switch (task) {
    case Task::kCopy: return "copy";
    case Task::kReverse: return "reverse";
    case Task::kSubstitution: return "vocabulary-substitution";
  }
  return "?";
}

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTestId: return "test_id";
    case Split::kTestOod: return "test_ood";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  for (Split s : kAllSplits)
    if (split_name(s) == name) return s;
  throw std::runtime_error("unknown split: " + name +
                           " (expected train, dev, test_id, or test_ood)");
}

int CorpusSpec::split_size(Split s) const {
  switch (s) {
    case Split::kTrain: return train_size;
    case Split::kDev: return dev_size;
    case Split::kTestId: return test_id_size;
    case Split::kTestOod: return test_ood_size;
  }
  return 0;
}

bool Corpus::is_ood_word(const std::string& w) const {
  return std::find(vocab_ood.begin(), vocab_ood.end(), w) != vocab_ood.end();
}

namespace {

void validate_spec(const CorpusSpec& spec) {
  require(spec.vocab_size >= 3,
          "vocab_size=" + std::to_string(spec.vocab_size) +
              " is too small to reserve an OOD stratum (need at least 3 word types: "
              "2 in-domain + 1 held out)");
  require(spec.len_min >= 1 && spec.len_max >= spec.len_min, "invalid length_range");
  require(spec.noise_rate >= 0.0 && spec.noise_rate <= 1.0, "noise_rate must be in [0,1]");
  require(spec.train_size > 0 && spec.dev_size > 0 && spec.test_id_size > 0 &&
              spec.test_ood_size > 0,
          "all split sizes must be > 0");
  require(spec.alphabet_size >= 4 && spec.alphabet_size <= 26,
          "alphabet_size must be in [4,26] (last two characters form the OOD stratum)");
}

std::string random_word(Rng& rng, const std::string& chars) {
  int len = rng.uniform_int(2, 4);
  std::string w;
  for (int i = 0; i < len; ++i) w += chars[rng.uniform_int(0, static_cast<int>(chars.size()) - 1)];
  return w;
}

// Distinct random words; ood words must contain at least one held-out char.
std::vector<std::string> sample_words(Rng& rng, int count, const std::string& chars,
                                      const std::string& must_contain,
                                      std::unordered_set<std::string>& taken) {
  std::vector<std::string> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    require(++attempts < 100000 * count,
            "could not sample " + std::to_string(count) +
                " distinct word types; vocabulary too small for the requested spec");
    std::string w = random_word(rng, chars);
    if (!must_contain.empty() && w.find_first_of(must_contain) == std::string::npos) continue;
    if (!taken.insert(w).second) continue;
    out.push_back(w);
  }
  return out;
}

WordSequence apply_task(const Corpus& corpus, const WordSequence& src) {
  WordSequence tgt;
  tgt.sentence_id = src.sentence_id;
  switch (corpus.spec.task) {
    case Task::kCopy:
      tgt.words = src.words;
      break;
    case Task::kReverse:
      tgt.words.assign(src.words.rbegin(), src.words.rend());
      break;
    case Task::kSubstitution:
      for (const auto& w : src.words) tgt.words.push_back(corpus.substitution.at(w));
      break;
  }
  return tgt;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path);
  for (const auto& l : lines) out << l << "\n";
  require(out.good(), "write failed: " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  return s;
}

std::vector<std::string> split_words(const std::string& line) {
  std::vector<std::string> words;
  std::istringstream in(line);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

}  // namespace

Corpus generate_corpus(const CorpusSpec& spec) {
  validate_spec(spec);
  Corpus corpus;
  corpus.spec = spec;

  std::string all_chars, in_chars, ood_chars;
  for (int i = 0; i < spec.alphabet_size; ++i) all_chars += static_cast<char>('a' + i);
  in_chars = all_chars.substr(0, spec.alphabet_size - 2);
  ood_chars = all_chars.substr(spec.alphabet_size - 2);

  int ood_count = std::max(1, spec.vocab_size / 5);
  int in_count = spec.vocab_size - ood_count;
  require(in_count >= 2, "vocab_size too small to reserve an OOD stratum");

  Rng vocab_rng(spec.seed, "corpus/vocab");
  std::unordered_set<std::string> taken;
  corpus.vocab_in = sample_words(vocab_rng, in_count, in_chars, "", taken);
  // Held-out types always carry at least one character absent from training,
  // so their subword units are genuinely unseen at training time.
  corpus.vocab_ood = sample_words(vocab_rng, ood_count, all_chars, ood_chars, taken);

  Rng table_rng(spec.seed, "corpus/subwords");
  std::unordered_set<std::string> table_set;
  int max_bigrams = static_cast<int>(in_chars.size() * in_chars.size());
  int want = std::min(spec.bigram_count, max_bigrams);
  while (static_cast<int>(table_set.size()) < want) {
    std::string bg;
    bg += in_chars[table_rng.uniform_int(0, static_cast<int>(in_chars.size()) - 1)];
    bg += in_chars[table_rng.uniform_int(0, static_cast<int>(in_chars.size()) - 1)];
    table_set.insert(bg);
  }
  corpus.segmentation_table.assign(table_set.begin(), table_set.end());
  std::sort(corpus.segmentation_table.begin(), corpus.segmentation_table.end());

  // Word-level translation table. The permutation never crosses the
  // in-domain/OOD boundary, so training targets stay in-domain.
  Rng perm_rng(spec.seed, "corpus/perm");
  auto make_perm = [&](const std::vector<std::string>& words) {
    std::vector<std::string> shuffled = words;
    if (corpus.spec.task == Task::kSubstitution) perm_rng.shuffle(shuffled);
    for (std::size_t i = 0; i < words.size(); ++i) corpus.substitution[words[i]] = shuffled[i];
  };
  make_perm(corpus.vocab_in);
  make_perm(corpus.vocab_ood);

  for (Split s : kAllSplits) {
    Rng rng(spec.seed, "corpus/split/" + split_name(s));
    int n = spec.split_size(s);
    std::vector<char> inject(n, 0);
    if (s == Split::kTestOod) {
      int k = static_cast<int>(std::ceil(spec.noise_rate * n));
      k = std::min(k, n);
      std::fill(inject.begin(), inject.begin() + k, 1);
      rng.shuffle(inject);
    }
    auto& sentences = corpus.split(s);
    sentences.reserve(n);
    for (int i = 0; i < n; ++i) {
      ParallelSentence pair;
      pair.source.sentence_id = i;
      int len = rng.uniform_int(spec.len_min, spec.len_max);
      for (int p = 0; p < len; ++p)
        pair.source.words.push_back(
            corpus.vocab_in[rng.uniform_int(0, static_cast<int>(corpus.vocab_in.size()) - 1)]);
      if (inject[i]) {
        int injected = 0;
        for (int p = 0; p < len; ++p) {
          if (rng.uniform() < 0.3) {
            pair.source.words[p] =
                corpus.vocab_ood[rng.uniform_int(0, static_cast<int>(corpus.vocab_ood.size()) - 1)];
            ++injected;
          }
        }
        if (injected == 0) {
          int p = rng.uniform_int(0, len - 1);
          pair.source.words[p] =
              corpus.vocab_ood[rng.uniform_int(0, static_cast<int>(corpus.vocab_ood.size()) - 1)];
        }
        pair.has_ood = true;
      }
      pair.target = apply_task(corpus, pair.source);
      sentences.push_back(std::move(pair));
    }
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(dir);
  const CorpusSpec& spec = corpus.spec;

  KvConfig cfg;
  cfg.set("task", task_name(spec.task));
  cfg.set_int("vocab_size", spec.vocab_size);
  cfg.set_int("len_min", spec.len_min);
  cfg.set_int("len_max", spec.len_max);
  cfg.set_double("noise_rate", spec.noise_rate);
  cfg.set_int("seed", static_cast<long long>(spec.seed));
  cfg.set_int("train_size", spec.train_size);
  cfg.set_int("dev_size", spec.dev_size);
  cfg.set_int("test_id_size", spec.test_id_size);
  cfg.set_int("test_ood_size", spec.test_ood_size);
  cfg.set_int("alphabet_size", spec.alphabet_size);
  cfg.set_int("bigram_count", spec.bigram_count);
  cfg.save(dir + "/corpus.cfg");

  write_lines(dir + "/vocab.in.txt", corpus.vocab_in);
  write_lines(dir + "/vocab.ood.txt", corpus.vocab_ood);
  write_lines(dir + "/subwords.txt", corpus.segmentation_table);

  if (spec.task == Task::kSubstitution) {
    std::vector<std::string> rows;
    auto dump = [&](const std::vector<std::string>& words) {
      for (const auto& w : words) rows.push_back(w + "\t" + corpus.substitution.at(w));
    };
    dump(corpus.vocab_in);
    dump(corpus.vocab_ood);
    write_lines(dir + "/substitution.tsv", rows);
  }

  for (Split s : kAllSplits) {
    std::vector<std::string> src, tgt;
    for (const auto& pair : corpus.split(s)) {
      src.push_back(join_words(pair.source.words));
      tgt.push_back(join_words(pair.target.words));
    }
    write_lines(dir + "/" + split_name(s) + ".src", src);
    write_lines(dir + "/" + split_name(s) + ".tgt", tgt);
  }
}

Corpus load_corpus(const std::string& dir) {
  KvConfig cfg = KvConfig::load(dir + "/corpus.cfg");
  Corpus corpus;
  CorpusSpec& spec = corpus.spec;
  spec.task = parse_task(cfg.get("task"));
  spec.vocab_size = cfg.get_int("vocab_size");
  spec.len_min = cfg.get_int("len_min");
  spec.len_max = cfg.get_int("len_max");
  spec.noise_rate = cfg.get_double("noise_rate");
  spec.seed = cfg.get_u64("seed", 1);
  spec.train_size = cfg.get_int("train_size");
  spec.dev_size = cfg.get_int("dev_size");
  spec.test_id_size = cfg.get_int("test_id_size");
  spec.test_ood_size = cfg.get_int("test_ood_size");
  spec.alphabet_size = cfg.get_int("alphabet_size");
  spec.bigram_count = cfg.get_int("bigram_count");

  corpus.vocab_in = read_lines(dir + "/vocab.in.txt");
  corpus.vocab_ood = read_lines(dir + "/vocab.ood.txt");
  corpus.segmentation_table = read_lines(dir + "/subwords.txt");

  if (spec.task == Task::kSubstitution) {
    for (const auto& row : read_lines(dir + "/substitution.tsv")) {
      auto tab = row.find('\t');
      require(tab != std::string::npos, "malformed substitution.tsv row: " + row);
      corpus.substitution[row.substr(0, tab)] = row.substr(tab + 1);
    }
  } else {
    for (const auto& w : corpus.vocab_in) corpus.substitution[w] = w;
    for (const auto& w : corpus.vocab_ood) corpus.substitution[w] = w;
  }

  std::unordered_set<std::string> ood_set(corpus.vocab_ood.begin(), corpus.vocab_ood.end());
  for (Split s : kAllSplits) {
    auto src = read_lines(dir + "/" + split_name(s) + ".src");
    auto tgt = read_lines(dir + "/" + split_name(s) + ".tgt");
    require(src.size() == tgt.size(),
            "parallel files disagree on line count for split " + split_name(s));
    auto& sentences = corpus.split(s);
    for (std::size_t i = 0; i < src.size(); ++i) {
      ParallelSentence pair;
      pair.source.sentence_id = static_cast<int>(i);
      pair.source.words = split_words(src[i]);
      pair.target.sentence_id = static_cast<int>(i);
      pair.target.words = split_words(tgt[i]);
      for (const auto& w : pair.source.words)
        if (ood_set.count(w)) pair.has_ood = true;
      sentences.push_back(std::move(pair));
    }
  }
  return corpus;
}

Segmenter::Segmenter(std::vector<std::string> table) : table_(std::move(table)) {
  std::sort(table_.begin(), table_.end(), [](const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a < b;
  });
  for (const auto& t : table_) {
    require(!t.empty(), "empty segmentation table entry");
    lookup_.insert(t);
    max_len_ = std::max(max_len_, static_cast<int>(t.size()));
  }
}

std::vector<std::string> Segmenter::segment_word(const std::string& word) const {
  require(!word.empty(), "cannot segment an empty word");
  std::vector<std::string> pieces;
  std::size_t pos = 0;
  while (pos < word.size()) {
    std::size_t best = 1;  // single-character fallback
    std::size_t cap = std::min<std::size_t>(max_len_, word.size() - pos);
    for (std::size_t len = cap; len >= 2; --len) {
      if (lookup_.count(word.substr(pos, len))) {
        best = len;
        break;
      }
    }
    pieces.push_back(word.substr(pos, best));
    pos += best;
  }
  return pieces;
}

SubwordSequence Segmenter::segment(const WordSequence& s) const {
  SubwordSequence out;
  out.sentence_id = s.sentence_id;
  for (std::size_t w = 0; w < s.words.size(); ++w) {
    auto pieces = segment_word(s.words[w]);
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      bool cont = p + 1 < pieces.size();
      out.units.push_back(cont ? pieces[p] + "@@" : pieces[p]);
      out.continuation.push_back(cont ? 1 : 0);
      out.word_map.push_back(static_cast<int>(w));
    }
  }
  return out;
}

WordSequence desegment(const SubwordSequence& t) {
  WordSequence out;
  out.sentence_id = t.sentence_id;
  std::string current;
  for (std::size_t i = 0; i < t.units.size(); ++i) {
    const std::string& u = t.units[i];
    bool cont = t.continuation[i] != 0;
    require(!cont || u.size() > 2, "malformed continuation unit: " + u);
    current += cont ? u.substr(0, u.size() - 2) : u;
    if (!cont) {
      out.words.push_back(current);
      current.clear();
    }
  }
  require(current.empty(), "dangling continuation flag at sequence end");
  return out;
}

SubwordSequence subwords_from_surface(const std::vector<std::string>& units, int sentence_id,
                                      bool strict) {
  SubwordSequence out;
  out.sentence_id = sentence_id;
  int word = 0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const std::string& u = units[i];
    bool cont = u.size() > 2 && u.compare(u.size() - 2, 2, "@@") == 0;
    out.units.push_back(u);
    out.continuation.push_back(cont ? 1 : 0);
    out.word_map.push_back(word);
    if (!cont) ++word;
  }
  if (!out.continuation.empty() && out.continuation.back()) {
    require(!strict, "dangling continuation flag at sequence end");
    out.continuation.back() = 0;  // close the unfinished word
    out.units.back() = out.units.back().substr(0, out.units.back().size() - 2);
  }
  return out;
}

Vocab Vocab::build(int alphabet_size, const std::vector<std::string>& table) {
  std::vector<std::string> bases;
  for (int i = 0; i < alphabet_size; ++i) bases.push_back(std::string(1, 'a' + i));
  bases.insert(bases.end(), table.begin(), table.end());
  std::sort(bases.begin(), bases.end());
  bases.erase(std::unique(bases.begin(), bases.end()), bases.end());

  std::vector<std::string> units = {"<unk>", "<bos>", "<eos>"};
  for (const auto& b : bases) {
    units.push_back(b);
    units.push_back(b + "@@");
  }
  return from_units(std::move(units));
}

Vocab Vocab::from_units(std::vector<std::string> units) {
  Vocab v;
  v.id_to_unit_ = std::move(units);
  for (std::size_t i = 0; i < v.id_to_unit_.size(); ++i)
    v.unit_to_id_[v.id_to_unit_[i]] = static_cast<int>(i);
  require(v.id_to_unit_.size() >= 3 && v.id_to_unit_[0] == "<unk>" &&
              v.id_to_unit_[1] == "<bos>" && v.id_to_unit_[2] == "<eos>",
          "vocab must start with <unk>, <bos>, <eos>");
  return v;
}

int Vocab::id(const std::string& unit) const {
  auto it = unit_to_id_.find(unit);
  return it == unit_to_id_.end() ? unk() : it->second;
}

const std::string& Vocab::unit(int id) const {
  require(id >= 0 && id < size(), "unit id out of range: " + std::to_string(id));
  return id_to_unit_[id];
}

std::vector<int> Vocab::encode(const SubwordSequence& s) const {
  std::vector<int> ids;
  ids.reserve(s.units.size());
  for (const auto& u : s.units) ids.push_back(id(u));
  return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> units;
  units.reserve(ids.size());
  for (int i : ids) units.push_back(unit(i));
  return units;
}

int gold_target_word(Task task, int source_word, int word_count) {
  require(source_word >= 0 && source_word < word_count, "source word index out of range");
  return task == Task::kReverse ? word_count - 1 - source_word : source_word;
}

std::vector<int> gold_subword_alignment(Task task, const SubwordSequence& src,
                                        const SubwordSequence& tgt) {
  require(task != Task::kSubstitution,
          "subword-level gold alignment is only defined for copy and reverse");
  require(src.size() == tgt.size(), "copy/reverse sides must have equal subword counts");
  int words = src.word_count();
  // Start offset and piece count of every target word.
  std::vector<int> tgt_start(words, -1), tgt_len(words, 0);
  for (int u = 0; u < tgt.size(); ++u) {
    int w = tgt.word_map[u];
    if (tgt_start[w] < 0) tgt_start[w] = u;
    ++tgt_len[w];
  }
  std::vector<int> gold(src.size());
  int piece = 0, prev_word = -1;
  for (int u = 0; u < src.size(); ++u) {
    int w = src.word_map[u];
    piece = (w == prev_word) ? piece + 1 : 0;
    prev_word = w;
    int tw = gold_target_word(task, w, words);
    require(piece < tgt_len[tw], "segmentation mismatch between source and target word");
    gold[u] = tgt_start[tw] + piece;
  }
  return gold;
}

}  // namespace seqconf
