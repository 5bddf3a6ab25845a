#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>

#include "notesearch/errors.hpp"
#include "notesearch/ingest.hpp"

namespace notesearch::ingest {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1p-53; }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }

 private:
  std::mt19937_64 gen_;
};

std::string format_date(std::int64_t days) {
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string format_time(std::int64_t days, std::size_t seconds) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "T%02zu:%02zu:%02zuZ", seconds / 3600, (seconds / 60) % 60, seconds % 60);
  return format_date(days) + buf;
}

const std::vector<std::string> kFirstNames = {"Avery", "Jordan", "Riley", "Casey", "Morgan", "Quinn", "Rowan",
                                              "Emerson", "Finley", "Harper", "Logan", "Parker", "Reese", "Sawyer"};
const std::vector<std::string> kLastNames = {"Alvarez", "Brennan", "Chowdhury", "Delgado", "Eriksen", "Fontaine",
                                             "Gallagher", "Hollis", "Iwasaki", "Jovanovic", "Kowalski", "Lindqvist",
                                             "Moreau", "Nakamura", "Okafor", "Petrov"};

const std::vector<std::string> kComplaints = {
    "Follow-up visit for ongoing care and review of recent results.",
    "Scheduled visit to review treatment progress and tolerance.",
    "Parent reports intermittent fatigue and reduced appetite over the past week.",
    "Routine surveillance visit with no new concerns raised by the family.",
    "Evaluation of mild abdominal discomfort noted by caregivers.",
    "Visit for medication reconciliation and interval history.",
};

const std::vector<std::string> kHistory = {
    "The family reports good adherence to the current medication schedule.",
    "Sleep has been adequate and school attendance is mostly regular.",
    "There have been no emergency visits since the last appointment.",
    "Caregivers describe occasional headaches that resolve with rest.",
    "Appetite has improved gradually and weight is stable on review.",
    "No fevers, chills or night sweats have been reported at home.",
    "Prior imaging was reviewed with the family during this encounter.",
    "Laboratory studies from last month were within expected ranges.",
    "The patient remains active and enjoys outdoor play with siblings.",
    "Nutrition counseling was provided at the previous visit and was helpful.",
};

const std::vector<std::string> kReview = {
    "Constitutional: negative for weight loss.",
    "Respiratory: no cough or wheeze.",
    "Cardiovascular: no palpitations or syncope.",
    "Gastrointestinal: no vomiting; bowel habits regular.",
    "Neurologic: no seizures or focal weakness.",
    "Skin: no new rashes or bruising.",
};

const std::vector<std::string> kExam = {
    "Vital signs are within normal limits for age.",
    "Alert, interactive and in no acute distress.",
    "Lungs clear to auscultation bilaterally.",
    "Heart with regular rate and rhythm and no murmur.",
    "Abdomen soft, non-tender, without hepatosplenomegaly.",
    "Extremities warm and well perfused with full range of motion.",
};

const std::vector<std::string> kPlan = {
    "Continue the current regimen and monitor symptoms at home.",
    "Repeat laboratory studies before the next scheduled visit.",
    "Return to clinic in four weeks or sooner for new concerns.",
    "Family education provided and all questions were answered.",
    "Coordinate with the care team regarding upcoming imaging.",
    "Encourage hydration, balanced diet and regular activity.",
};

std::string sentences(Rng& rng, const std::vector<std::string>& pool, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += rng.pick(pool);
  }
  return out;
}

std::string fact_sentence(const std::string& kind, const std::string& value) {
  if (kind == "condition") return "Primary oncologic diagnosis: " + value + ".";
  if (kind == "onset_age") return "Symptoms began with " + value + " per family report.";
  return "The patient sustained an injury, " + value + ", which was treated.";
}

std::string compose_note(Rng& rng, bool long_note, const std::vector<std::string>& planted) {
  std::string hpi = sentences(rng, kHistory, 3);
  for (const auto& s : planted) {
    hpi += ' ';
    hpi += s;
  }
  hpi += ' ';
  hpi += sentences(rng, kHistory, 2);

  std::string text = "CHIEF COMPLAINT:\n" + rng.pick(kComplaints);
  text += "\n\nHISTORY OF PRESENT ILLNESS:\n" + hpi;
  if (long_note) {
    for (int p = 0; p < 4; ++p) text += "\n\n" + sentences(rng, kHistory, 6);
  }
  text += "\n\nREVIEW OF SYSTEMS:\n";
  for (std::size_t i = 0; i < 3; ++i) text += (i ? "\n" : "") + rng.pick(kReview);
  text += "\n\nPHYSICAL EXAM:\n" + sentences(rng, kExam, 3);
  text += "\n\nASSESSMENT AND PLAN:\n" + sentences(rng, kPlan, long_note ? 6 : 2);
  return text;
}

}  // namespace

void SyntheticCorpusSpec::validate() const {
  if (min_notes_per_patient == 0 || min_notes_per_patient > max_notes_per_patient) {
    throw InvalidArgument("notes per patient range must satisfy 1 <= min <= max");
  }
  if (long_note_fraction < 0.0 || long_note_fraction > 1.0) throw InvalidArgument("long_note_fraction must be in [0, 1]");
  if (store::days_since_epoch(start_date) > store::days_since_epoch(end_date)) {
    throw InvalidArgument("start_date after end_date");
  }
  for (const auto* v : {&specialties, &note_categories, &encounter_types, &departments, &author_roles}) {
    if (v->empty()) throw InvalidArgument("metadata vocabularies must be nonempty");
  }
}

const std::vector<std::string>& fact_kinds() {
  static const std::vector<std::string> kinds = {"condition", "onset_age", "injury"};
  return kinds;
}

const std::vector<std::string>& fact_values(std::string_view kind) {
  static const std::vector<std::string> conditions = {
      "neuroblastoma, right adrenal",   "Wilms tumor, left kidney",      "medulloblastoma, posterior fossa",
      "osteosarcoma, distal left femur", "hepatoblastoma, right hepatic lobe", "Ewing sarcoma, right pelvis",
      "rhabdomyosarcoma, left orbit",
  };
  static const std::vector<std::string> onset = {"onset at age 2", "onset at age 3", "onset at age 4",
                                                 "onset at age 5", "onset at age 6", "onset at age 7",
                                                 "onset at age 8", "onset at age 9"};
  static const std::vector<std::string> injuries = {
      "fracture of the right clavicle", "laceration of the left forearm", "concussion after a bicycle fall",
      "sprain of the left ankle",       "burn to the right hand",         "dog bite to the left calf",
  };
  if (kind == "condition") return conditions;
  if (kind == "onset_age") return onset;
  if (kind == "injury") return injuries;
  throw InvalidArgument("unknown fact kind: " + std::string(kind));
}

nlohmann::json to_json(const TruthFact& f) {
  return {{"mrn", f.mrn}, {"kind", f.kind}, {"value", f.value}, {"note_ids", f.note_ids}};
}

TruthFact truth_fact_from_json(const nlohmann::json& j) {
  TruthFact f;
  f.mrn = j.at("mrn").get<std::string>();
  f.kind = j.at("kind").get<std::string>();
  f.value = j.at("value").get<std::string>();
  f.note_ids = j.at("note_ids").get<std::vector<NoteId>>();
  return f;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticCorpus corpus;
  const auto first_day = store::days_since_epoch(spec.start_date);
  const auto last_day = store::days_since_epoch(spec.end_date);
  const auto span_days = static_cast<std::size_t>(last_day - first_day + 1);
  NoteId next_id = spec.first_note_id;

  for (std::size_t p = 0; p < spec.num_patients; ++p) {
    char mrn[16];
    std::snprintf(mrn, sizeof(mrn), "%07zu", p + 1);
    store::PatientInfo patient;
    patient.mrn = mrn;
    patient.name = rng.pick(kFirstNames) + " " + rng.pick(kLastNames);
    patient.sex = rng.below(2) ? "F" : "M";
    const auto birth = first_day - 365 - static_cast<std::int64_t>(rng.below(365 * 14));
    patient.birth_date = format_date(birth);

    const std::size_t n_notes =
        spec.min_notes_per_patient + rng.below(spec.max_notes_per_patient - spec.min_notes_per_patient + 1);

    std::vector<std::vector<std::string>> planted(n_notes);
    std::vector<TruthFact> facts;
    for (const auto& kind : fact_kinds()) {
      TruthFact f{patient.mrn, kind, rng.pick(fact_values(kind)), {}};
      const std::size_t copies = std::min<std::size_t>(n_notes, 1 + rng.below(2));
      std::vector<std::size_t> slots(n_notes);
      for (std::size_t i = 0; i < n_notes; ++i) slots[i] = i;
      for (std::size_t i = 0; i < copies; ++i) {
        std::swap(slots[i], slots[i + rng.below(n_notes - i)]);
        planted[slots[i]].push_back(fact_sentence(kind, f.value));
        f.note_ids.push_back(next_id + slots[i]);
      }
      std::sort(f.note_ids.begin(), f.note_ids.end());
      facts.push_back(std::move(f));
    }

    for (std::size_t i = 0; i < n_notes; ++i) {
      store::NoteRecord note;
      note.note_id = next_id + i;
      note.patient = patient;
      note.note_category = rng.pick(spec.note_categories);
      note.encounter_type = rng.pick(spec.encounter_types);
      note.department = rng.pick(spec.departments);
      note.specialty = rng.pick(spec.specialties);
      note.author.role = rng.pick(spec.author_roles);
      note.author.name = "Dr. " + rng.pick(kLastNames);
      const auto day = first_day + static_cast<std::int64_t>(rng.below(span_days));
      const std::size_t filed_sec = 8 * 3600 + rng.below(10 * 3600);
      note.filed_time = format_time(day, filed_sec);
      note.creation_time = format_time(day, filed_sec - rng.below(4 * 3600));
      const bool long_note = rng.unit() < spec.long_note_fraction;
      note.text = compose_note(rng, long_note, planted[i]);
      corpus.notes.push_back(std::move(note));
    }
    next_id += n_notes;
    for (auto& f : facts) corpus.facts.push_back(std::move(f));
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  std::filesystem::create_directories(dir);
  store::write_notes_jsonl(dir / "notes.jsonl", corpus.notes);
  std::ofstream out(dir / "truth.jsonl", std::ios::trunc);
  if (!out) throw StorageError("cannot write " + (dir / "truth.jsonl").string());
  for (const auto& f : corpus.facts) out << to_json(f).dump() << '\n';
  if (!out) throw StorageError("failed writing truth file");
}

std::vector<TruthFact> read_truth_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open " + path.string());
  std::vector<TruthFact> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(truth_fact_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace notesearch::ingest
