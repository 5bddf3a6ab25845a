#include "notesearch/note_store.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <limits>
#include <set>

#include "notesearch/errors.hpp"

namespace notesearch::store {

void to_json(nlohmann::json& j, const NoteRecord& r) {
  j = nlohmann::json{
      {"note_id", r.note_id},
      {"text", r.text},
      {"patient", {{"mrn", r.patient.mrn}, {"name", r.patient.name}, {"birth_date", r.patient.birth_date}, {"sex", r.patient.sex}}},
      {"note_category", r.note_category},
      {"encounter_type", r.encounter_type},
      {"department", r.department},
      {"specialty", r.specialty},
      {"author", {{"name", r.author.name}, {"role", r.author.role}}},
      {"filed_time", r.filed_time},
      {"creation_time", r.creation_time},
  };
}

void from_json(const nlohmann::json& j, NoteRecord& r) {
  r.note_id = j.at("note_id").get<NoteId>();
  r.text = j.at("text").get<std::string>();
  const auto& p = j.at("patient");
  r.patient.mrn = p.at("mrn").get<std::string>();
  r.patient.name = p.value("name", "");
  r.patient.birth_date = p.value("birth_date", "");
  r.patient.sex = p.value("sex", "");
  r.note_category = j.value("note_category", "");
  r.encounter_type = j.value("encounter_type", "");
  r.department = j.value("department", "");
  r.specialty = j.value("specialty", "");
  if (j.contains("author")) {
    r.author.name = j["author"].value("name", "");
    r.author.role = j["author"].value("role", "");
  }
  r.filed_time = j.value("filed_time", "");
  r.creation_time = j.value("creation_time", "");
}

std::int64_t days_since_epoch(std::string_view s) {
  auto field = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    const auto* first = s.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, v);
    if (ec != std::errc() || ptr != first + len) throw InvalidArgument("malformed date: " + std::string(s));
    return v;
  };
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') throw InvalidArgument("malformed date: " + std::string(s));
  const std::chrono::year_month_day ymd{std::chrono::year{field(0, 4)},
                                        std::chrono::month{static_cast<unsigned>(field(5, 2))},
                                        std::chrono::day{static_cast<unsigned>(field(8, 2))}};
  if (!ymd.ok()) throw InvalidArgument("invalid calendar date: " + std::string(s));
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

index::AttributeSet attribute_set(const NoteRecord& r) {
  using index::CategoricalField;
  using index::NumericField;
  index::AttributeSet a;
  a.get(CategoricalField::kPatientId) = r.patient.mrn;
  a.get(CategoricalField::kNoteCategory) = r.note_category;
  a.get(CategoricalField::kEncounterType) = r.encounter_type;
  a.get(CategoricalField::kDepartment) = r.department;
  a.get(CategoricalField::kSpecialty) = r.specialty;
  a.get(CategoricalField::kAuthorType) = r.author.role;
  a.get(CategoricalField::kAuthorName) = r.author.name;
  if (!r.filed_time.empty()) {
    const auto filed = days_since_epoch(r.filed_time);
    a.get(NumericField::kDate) = static_cast<double>(filed);
    if (!r.patient.birth_date.empty()) {
      a.get(NumericField::kAgeDays) = static_cast<double>(filed - days_since_epoch(r.patient.birth_date));
    }
  }
  return a;
}

std::string make_row_key(std::int64_t note_id) {
  if (note_id < 0) throw InvalidArgument("note id must be non-negative");
  static constexpr char kHex[] = "0123456789abcdef";
  const auto id = static_cast<std::uint64_t>(note_id);
  const auto salt = static_cast<unsigned>(id % 256);
  std::string key(23, '0');
  key[0] = kHex[salt >> 4];
  key[1] = kHex[salt & 0xf];
  key[2] = '#';
  // Reversed zero-padded decimal: least significant digit first.
  std::uint64_t v = id;
  for (std::size_t i = 3; i < 23; ++i) {
    key[i] = static_cast<char>('0' + v % 10);
    v /= 10;
  }
  return key;
}

std::uint64_t decode_row_key(std::string_view key) {
  auto bad = [&] { return InvalidArgument("malformed row key: " + std::string(key)); };
  if (key.size() != 23 || key[2] != '#') throw bad();
  std::uint64_t id = 0;
  for (std::size_t i = 22; i >= 3; --i) {
    const char c = key[i];
    if (c < '0' || c > '9') throw bad();
    if (id > (std::numeric_limits<std::uint64_t>::max() - (c - '0')) / 10) throw bad();
    id = id * 10 + static_cast<std::uint64_t>(c - '0');
  }
  if (id > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) throw bad();
  if (make_row_key(static_cast<std::int64_t>(id)) != key) throw bad();
  return id;
}

NoteStore::NoteStore(std::unique_ptr<KvBackend> backend, std::size_t batch_cap)
    : backend_(std::move(backend)), batch_cap_(batch_cap) {
  if (!backend_) throw InvalidArgument("note store requires a backend");
  if (batch_cap_ == 0) throw InvalidArgument("batch cap must be positive");
}

std::size_t NoteStore::put_notes(std::span<const NoteRecord> records) {
  if (records.empty()) return 0;
  std::set<NoteId> seen;
  std::vector<std::pair<std::string, std::string>> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    if (!seen.insert(r.note_id).second) {
      throw InvalidArgument("duplicate note id in batch: " + std::to_string(r.note_id));
    }
    if (r.text.empty()) throw InvalidArgument("note " + std::to_string(r.note_id) + " has empty text");
    if (r.note_id > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw InvalidArgument("note id out of range: " + std::to_string(r.note_id));
    }
    rows.emplace_back(make_row_key(static_cast<std::int64_t>(r.note_id)), nlohmann::json(r).dump());
  }
  std::scoped_lock lock(write_mutex_);
  backend_->put_batch(rows);
  return rows.size();
}

GetResult NoteStore::get_notes(std::span<const NoteId> ids) const {
  if (ids.size() > batch_cap_) {
    throw InvalidArgument("batch of " + std::to_string(ids.size()) + " exceeds cap " + std::to_string(batch_cap_));
  }
  GetResult out;
  if (ids.empty()) return out;
  std::vector<std::string> keys;
  keys.reserve(ids.size());
  for (auto id : ids) {
    if (id > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      keys.emplace_back();
    } else {
      keys.push_back(make_row_key(static_cast<std::int64_t>(id)));
    }
  }
  const auto values = backend_->get_batch(keys);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!values[i]) {
      if (std::find(out.missing.begin(), out.missing.end(), ids[i]) == out.missing.end()) out.missing.push_back(ids[i]);
      continue;
    }
    try {
      out.records.emplace(ids[i], nlohmann::json::parse(*values[i]).get<NoteRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw StorageError("corrupt record for note " + std::to_string(ids[i]) + ": " + e.what());
    }
  }
  return out;
}

std::optional<NoteRecord> NoteStore::get_note(NoteId id) const {
  auto res = get_notes(std::span(&id, 1));
  if (res.records.empty()) return std::nullopt;
  return std::move(res.records.begin()->second);
}

std::vector<NoteRecord> read_notes_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open " + path.string());
  std::vector<NoteRecord> notes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      notes.push_back(nlohmann::json::parse(line).get<NoteRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return notes;
}

void write_notes_jsonl(const std::filesystem::path& path, std::span<const NoteRecord> notes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StorageError("cannot open " + path.string() + " for writing");
  for (const auto& n : notes) out << nlohmann::json(n).dump() << '\n';
  if (!out) throw StorageError("failed writing " + path.string());
}

}  // namespace notesearch::store
