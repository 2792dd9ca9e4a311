#include "mempoet/memory.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

#include "mempoet/binio.hpp"
#include "mempoet/errors.hpp"

namespace mempoet {

using nlohmann::json;

namespace {
constexpr char kBankMagic[] = "MEMBANK1";
}

Matrix query_decoder_step(int y_prev, const Matrix& q_prev, const ModelParams& params) {
  const Matrix zero_context(1, params.dims.d_ctx());
  return decoder_step(y_prev, q_prev, zero_context, params);
}

MemoryBank MemoryBank::build(const ModelParams& params, const std::vector<Poem>& poems) {
  std::vector<EncodedPoem> encoded;
  encoded.reserve(poems.size());
  for (size_t i = 0; i < poems.size(); ++i)
    encoded.push_back(encode_poem(poems[i], params.vocab, static_cast<int>(i)));
  return build(params, encoded);
}

MemoryBank MemoryBank::build(const ModelParams& params, const std::vector<EncodedPoem>& poems) {
  MemoryBank bank;
  bank.source_dim_ = params.dims.d_state;
  bank.target_dim_ = params.dims.d_embed;
  bank.fingerprint_ = params.fingerprint();
  const Matrix& E = params.embeddings();
  for (size_t k = 0; k < poems.size(); ++k) {
    const std::vector<int>& tokens = poems[k].tokens;
    if (tokens.size() < 2) throw UsageError("MemoryBank::build: poem too short");
    const int start = bank.size();
    Matrix state(1, params.dims.d_state);
    for (size_t j = 1; j < tokens.size(); ++j) {
      state = query_decoder_step(tokens[j - 1], state, params);
      MemoryElement e;
      e.source = state;
      e.target = Matrix(1, E.cols);
      std::copy(E.row_ptr(tokens[j]), E.row_ptr(tokens[j]) + E.cols, e.target.a.begin());
      e.char_id = tokens[j];
      e.poem_index = static_cast<int>(k);
      e.step = static_cast<int>(j);
      bank.elements_.push_back(std::move(e));
    }
    bank.runs_.push_back({static_cast<int>(k), start, static_cast<int>(tokens.size()) - 1});
  }
  return bank;
}

MemoryBank MemoryBank::from_elements(std::vector<MemoryElement> elements, int source_dim,
                                     int target_dim, uint64_t fingerprint) {
  MemoryBank bank;
  bank.source_dim_ = source_dim;
  bank.target_dim_ = target_dim;
  bank.fingerprint_ = fingerprint;
  for (const MemoryElement& e : elements) {
    if (e.source.size() != source_dim || e.target.size() != target_dim)
      throw UsageError("MemoryBank::from_elements: element dim mismatch");
  }
  int start = 0;
  int run_poem = -1;
  for (size_t i = 0; i < elements.size(); ++i) {
    if (elements[i].poem_index != run_poem) {
      if (run_poem != -1)
        bank.runs_.push_back({run_poem, start, static_cast<int>(i) - start});
      run_poem = elements[i].poem_index;
      start = static_cast<int>(i);
    }
  }
  if (run_poem != -1)
    bank.runs_.push_back({run_poem, start, static_cast<int>(elements.size()) - start});
  bank.elements_ = std::move(elements);
  return bank;
}

Matrix memory_read(const Matrix& query, const MemoryBank& bank) {
  if (bank.empty()) throw UsageError("memory_read: empty bank");
  if (query.size() != bank.source_dim()) throw UsageError("memory_read: query dim mismatch");
  Matrix v(1, bank.target_dim());
  for (int i = 0; i < bank.size(); ++i) {
    const MemoryElement& e = bank.element(i);
    const double w = cosine(query, e.source);
    for (int j = 0; j < v.cols; ++j) v.a[static_cast<size_t>(j)] += w * e.target.a[static_cast<size_t>(j)];
  }
  return v;
}

Matrix fuse_distribution(const Matrix& s_t, const Matrix& v_t, double beta,
                         const ModelParams& params) {
  if (beta < 0.0) throw UsageError("fuse_distribution: beta must be >= 0");
  Matrix logits = project_logits(s_t, params);
  if (beta != 0.0) {
    const Matrix& E = params.embeddings();
    if (v_t.size() != E.cols) throw UsageError("fuse_distribution: v_t dim mismatch");
    for (int c = 0; c < E.rows; ++c) {
      const double* row = E.row_ptr(c);
      double s = 0.0;
      for (int j = 0; j < E.cols; ++j) s += row[j] * v_t.a[static_cast<size_t>(j)];
      logits.a[static_cast<size_t>(c)] += beta * s;
    }
  }
  return softmax(logits);
}

void MemoryBank::save(const std::string& path) const {
  json manifest;
  manifest["k"] = size();
  manifest["source_dim"] = source_dim_;
  manifest["target_dim"] = target_dim_;
  char fp[17];
  std::snprintf(fp, sizeof(fp), "%016llx", static_cast<unsigned long long>(fingerprint_));
  manifest["checkpoint_fingerprint"] = fp;
  json runs = json::array();
  for (const Run& r : runs_) runs.push_back({{"poem", r.poem_index}, {"start", r.start}, {"length", r.length}});
  manifest["poems"] = runs;
  json chars = json::array();
  for (const MemoryElement& e : elements_) chars.push_back(e.char_id);
  manifest["chars"] = chars;
  const std::string manifest_str = manifest.dump();

  std::string bytes;
  bytes.append(kBankMagic, 8);
  put_u64(bytes, manifest_str.size());
  bytes += manifest_str;
  for (const MemoryElement& e : elements_)
    for (double x : e.source.a) put_f64(bytes, x);
  for (const MemoryElement& e : elements_)
    for (double x : e.target.a) put_f64(bytes, x);
  write_file(path, bytes);
}

MemoryBank MemoryBank::load(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || bytes.compare(0, 8, kBankMagic, 8) != 0)
    throw DataError("bank: bad magic in " + path);
  size_t pos = 8;
  const uint64_t manifest_len = get_u64(bytes, pos);
  if (pos + manifest_len > bytes.size()) throw DataError("bank: truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(pos, manifest_len));
  } catch (const json::exception& e) {
    throw DataError(std::string("bank: invalid manifest: ") + e.what());
  }
  pos += manifest_len;

  MemoryBank bank;
  const int k = manifest.at("k").get<int>();
  bank.source_dim_ = manifest.at("source_dim").get<int>();
  bank.target_dim_ = manifest.at("target_dim").get<int>();
  bank.fingerprint_ = std::stoull(manifest.at("checkpoint_fingerprint").get<std::string>(),
                                  nullptr, 16);
  for (const auto& r : manifest.at("poems"))
    bank.runs_.push_back(
        {r.at("poem").get<int>(), r.at("start").get<int>(), r.at("length").get<int>()});
  const json& chars = manifest.at("chars");
  if (static_cast<int>(chars.size()) != k) throw DataError("bank: char table size mismatch");

  bank.elements_.resize(static_cast<size_t>(k));
  for (const Run& r : bank.runs_) {
    for (int i = 0; i < r.length; ++i) {
      MemoryElement& e = bank.elements_[static_cast<size_t>(r.start + i)];
      e.poem_index = r.poem_index;
      e.step = i + 1;
    }
  }
  for (int i = 0; i < k; ++i) {
    MemoryElement& e = bank.elements_[static_cast<size_t>(i)];
    e.char_id = chars[static_cast<size_t>(i)].get<int>();
    e.source = Matrix(1, bank.source_dim_);
  }
  for (int i = 0; i < k; ++i)
    for (double& x : bank.elements_[static_cast<size_t>(i)].source.a) x = get_f64(bytes, pos);
  for (int i = 0; i < k; ++i) {
    bank.elements_[static_cast<size_t>(i)].target = Matrix(1, bank.target_dim_);
    for (double& x : bank.elements_[static_cast<size_t>(i)].target.a) x = get_f64(bytes, pos);
  }
  if (pos != bytes.size()) throw DataError("bank: trailing bytes");
  return bank;
}

}  // namespace mempoet
