#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cage/common.hpp"

namespace cage {

enum class GraspLabel : int { kSuitable = 0, kNeutral = 1, kNotSuitable = 2 };

inline const char* to_string(GraspLabel l) {
  switch (l) {
    case GraspLabel::kSuitable: return "suitable";
    case GraspLabel::kNeutral: return "neutral";
    case GraspLabel::kNotSuitable: return "not_suitable";
  }
  throw Error("to_string: bad grasp label");
}

inline GraspLabel grasp_label_from_string(const std::string& s) {
  if (s == "suitable") return GraspLabel::kSuitable;
  if (s == "neutral") return GraspLabel::kNeutral;
  if (s == "not_suitable") return GraspLabel::kNotSuitable;
  throw Error("unknown grasp label '" + s + "'");
}

// Closed label set with stable integer ids in insertion order.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> labels) : labels_(std::move(labels)) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i].empty()) throw Error("vocabulary label must not be empty");
      if (!index_.emplace(labels_[i], static_cast<std::uint32_t>(i)).second)
        throw Error("duplicate vocabulary label '" + labels_[i] + "'");
    }
  }

  std::uint32_t index_of(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) throw Error("label '" + label + "' is not in the vocabulary");
    return it->second;
  }
  bool contains(const std::string& label) const { return index_.count(label) != 0; }
  std::size_t size() const { return labels_.size(); }
  const std::string& operator[](std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct Vocabularies {
  Vocab object_classes, materials, tasks, states, affordances;

  static Vocabularies defaults() {
    Vocabularies v;
    v.object_classes = Vocab({"cup", "spatula", "bowl", "pan", "bottle"});
    v.materials = Vocab({"plastic", "metal", "ceramic", "glass", "stone", "paper", "wood"});
    v.tasks = Vocab({"pour", "scoop", "poke", "cut", "lift", "hammer", "handover"});
    v.states = Vocab({"hot", "cold", "empty", "filled", "lid_on", "lid_off"});
    v.affordances = Vocab({"contain", "cut", "display", "engine", "grasp", "hit", "pound",
                           "support", "wrap_grasp", "scoop", "none"});
    return v;
  }
};

struct Part {
  std::string affordance;
  std::string material;
  std::vector<std::uint32_t> points;  // indices into the owning object's cloud
};

struct PartLabeledObject {
  std::string id;
  std::string object_class;
  std::vector<Vec3> points;
  std::vector<Part> parts;
};

struct Context {
  std::string id;
  std::string task;
  std::string state;
  std::string object_id;
  std::size_t object_index = SIZE_MAX;  // resolved by Dataset::rebuild_indexes
};

struct LabeledGrasp {
  Vec3 position;
  Quat orientation;
  GraspLabel label = GraspLabel::kNeutral;
};

struct Dataset {
  Vocabularies vocab;
  std::vector<PartLabeledObject> objects;
  std::vector<Context> contexts;
  std::vector<std::vector<LabeledGrasp>> grasps;        // aligned with contexts
  std::vector<std::pair<std::string, std::string>> meta;  // ordered, round-tripped verbatim

  void rebuild_indexes() {
    object_by_id_.clear();
    context_by_id_.clear();
    for (std::size_t i = 0; i < objects.size(); ++i)
      if (!object_by_id_.emplace(objects[i].id, i).second)
        throw Error("duplicate object id '" + objects[i].id + "'");
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      if (!context_by_id_.emplace(contexts[i].id, i).second)
        throw Error("duplicate context id '" + contexts[i].id + "'");
      auto it = object_by_id_.find(contexts[i].object_id);
      if (it == object_by_id_.end())
        throw Error("context '" + contexts[i].id + "' references unknown object '" +
                    contexts[i].object_id + "'");
      contexts[i].object_index = it->second;
    }
  }

  std::size_t object_index_of(const std::string& id) const {
    auto it = object_by_id_.find(id);
    if (it == object_by_id_.end()) throw Error("unknown object id '" + id + "'");
    return it->second;
  }
  std::size_t context_index_of(const std::string& id) const {
    auto it = context_by_id_.find(id);
    if (it == context_by_id_.end()) throw Error("unknown context id '" + id + "'");
    return it->second;
  }
  const PartLabeledObject& object_of(const Context& ctx) const {
    if (ctx.object_index >= objects.size()) throw Error("context has unresolved object index");
    return objects[ctx.object_index];
  }

 private:
  std::unordered_map<std::string, std::size_t> object_by_id_;
  std::unordered_map<std::string, std::size_t> context_by_id_;
};

inline void validate(const Dataset& ds) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw Error("invalid dataset: " + msg);
  };
  require(ds.vocab.object_classes.size() > 0, "empty object class vocabulary");
  require(ds.vocab.materials.size() > 0, "empty material vocabulary");
  require(ds.vocab.tasks.size() > 0, "empty task vocabulary");
  require(ds.vocab.states.size() > 0, "empty state vocabulary");
  require(ds.vocab.affordances.size() > 0, "empty affordance vocabulary");

  for (const auto& obj : ds.objects) {
    require(!obj.id.empty(), "object with empty id");
    require(ds.vocab.object_classes.contains(obj.object_class),
            "object '" + obj.id + "' has unknown class '" + obj.object_class + "'");
    require(!obj.points.empty(), "object '" + obj.id + "' has no points");
    for (const auto& p : obj.points)
      require(p.finite(), "object '" + obj.id + "' has a non-finite point");
    require(!obj.parts.empty(), "object '" + obj.id + "' has no parts");
    std::vector<char> covered(obj.points.size(), 0);
    for (const auto& part : obj.parts) {
      require(ds.vocab.affordances.contains(part.affordance),
              "object '" + obj.id + "' part has unknown affordance '" + part.affordance + "'");
      require(ds.vocab.materials.contains(part.material),
              "object '" + obj.id + "' part has unknown material '" + part.material + "'");
      require(!part.points.empty(), "object '" + obj.id + "' has a part with no points");
      for (std::uint32_t pi : part.points) {
        require(pi < obj.points.size(), "object '" + obj.id + "' part point index out of range");
        require(!covered[pi], "object '" + obj.id + "' has overlapping part point sets");
        covered[pi] = 1;
      }
    }
    for (std::size_t i = 0; i < covered.size(); ++i)
      require(covered[i] != 0,
              "object '" + obj.id + "' point " + std::to_string(i) + " belongs to no part");
  }

  require(ds.grasps.size() == ds.contexts.size(), "grasp lists not aligned with contexts");
  for (std::size_t ci = 0; ci < ds.contexts.size(); ++ci) {
    const Context& ctx = ds.contexts[ci];
    require(!ctx.id.empty(), "context with empty id");
    require(ds.vocab.tasks.contains(ctx.task),
            "context '" + ctx.id + "' has unknown task '" + ctx.task + "'");
    require(ds.vocab.states.contains(ctx.state),
            "context '" + ctx.id + "' has unknown state '" + ctx.state + "'");
    require(ctx.object_index < ds.objects.size(),
            "context '" + ctx.id + "' has unresolved object reference");
    require(!ds.grasps[ci].empty(), "context '" + ctx.id + "' has no grasps");
    for (const auto& g : ds.grasps[ci]) {
      require(g.position.finite(), "context '" + ctx.id + "' has a non-finite grasp position");
      require(g.orientation.finite(), "context '" + ctx.id + "' has a non-finite orientation");
      require(std::abs(g.orientation.norm() - 1.0) <= 1e-6,
              "context '" + ctx.id + "' has a non-unit grasp orientation");
    }
  }
}

namespace detail {

inline std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

inline void emit_string_array(std::ostream& os, const std::vector<std::string>& xs) {
  os << '[';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) os << ',';
    os << '"' << json_escape(xs[i]) << '"';
  }
  os << ']';
}

inline void emit_vec3(std::ostream& os, const Vec3& p) {
  os << '[' << format_g9(p.x) << ',' << format_g9(p.y) << ',' << format_g9(p.z) << ']';
}

inline Vec3 parse_vec3(const nlohmann::ordered_json& j, const char* what) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number())
    throw Error(std::string(what) + " must be an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline const nlohmann::ordered_json& field(const nlohmann::ordered_json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(std::string("missing field '") + key + "'");
  return *it;
}

inline std::string string_field(const nlohmann::ordered_json& j, const char* key) {
  const auto& f = field(j, key);
  if (!f.is_string()) throw Error(std::string("field '") + key + "' must be a string");
  return f.get<std::string>();
}

}  // namespace detail

// Writes the JSON-lines form: one header line, then object records, context
// records, and grasp records grouped by context. All keys are emitted in a
// fixed order and all numbers with 9 significant digits, so saving the same
// dataset twice produces byte-identical files.
inline void save_dataset(const Dataset& ds, const std::string& path) {
  validate(ds);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  using detail::emit_string_array;
  using detail::emit_vec3;
  using detail::json_escape;

  os << "{\"format\":\"cage-ds-1\",\"object_classes\":";
  emit_string_array(os, ds.vocab.object_classes.labels());
  os << ",\"materials\":";
  emit_string_array(os, ds.vocab.materials.labels());
  os << ",\"tasks\":";
  emit_string_array(os, ds.vocab.tasks.labels());
  os << ",\"states\":";
  emit_string_array(os, ds.vocab.states.labels());
  os << ",\"affordances\":";
  emit_string_array(os, ds.vocab.affordances.labels());
  os << ",\"meta\":{";
  for (std::size_t i = 0; i < ds.meta.size(); ++i) {
    if (i) os << ',';
    os << '"' << json_escape(ds.meta[i].first) << "\":\"" << json_escape(ds.meta[i].second)
       << '"';
  }
  os << "}}\n";

  for (const auto& obj : ds.objects) {
    os << "{\"type\":\"object\",\"id\":\"" << json_escape(obj.id) << "\",\"class\":\""
       << json_escape(obj.object_class) << "\",\"points\":[";
    for (std::size_t i = 0; i < obj.points.size(); ++i) {
      if (i) os << ',';
      emit_vec3(os, obj.points[i]);
    }
    os << "],\"parts\":[";
    for (std::size_t pi = 0; pi < obj.parts.size(); ++pi) {
      const Part& part = obj.parts[pi];
      if (pi) os << ',';
      os << "{\"affordance\":\"" << json_escape(part.affordance) << "\",\"material\":\""
         << json_escape(part.material) << "\",\"points\":[";
      for (std::size_t k = 0; k < part.points.size(); ++k) {
        if (k) os << ',';
        os << part.points[k];
      }
      os << "]}";
    }
    os << "]}\n";
  }

  for (const auto& ctx : ds.contexts) {
    os << "{\"type\":\"context\",\"id\":\"" << json_escape(ctx.id) << "\",\"task\":\""
       << json_escape(ctx.task) << "\",\"state\":\"" << json_escape(ctx.state)
       << "\",\"object\":\"" << json_escape(ctx.object_id) << "\"}\n";
  }

  for (std::size_t ci = 0; ci < ds.contexts.size(); ++ci) {
    for (const auto& g : ds.grasps[ci]) {
      os << "{\"type\":\"grasp\",\"context_id\":\"" << json_escape(ds.contexts[ci].id)
         << "\",\"position\":";
      emit_vec3(os, g.position);
      os << ",\"orientation\":[" << format_g9(g.orientation.w) << ',' << format_g9(g.orientation.x)
         << ',' << format_g9(g.orientation.y) << ',' << format_g9(g.orientation.z)
         << "],\"label\":\"" << to_string(g.label) << "\"}\n";
    }
  }
  os.flush();
  if (!os) throw Error("failed while writing '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");

  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw Error(path + ":" + std::to_string(line_no) + ": " + msg);
  };

  auto parse_line = [&](const std::string& text) {
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(text, nullptr, false);
    if (j.is_discarded()) fail("malformed JSON record");
    if (!j.is_object()) fail("record is not a JSON object");
    return j;
  };

  // header
  if (!std::getline(is, line)) throw Error(path + ": empty dataset file");
  ++line_no;
  {
    auto j = parse_line(line);
    auto fmt = j.find("format");
    if (fmt == j.end() || !fmt->is_string() || fmt->get<std::string>() != "cage-ds-1")
      fail("missing or unsupported format tag (expected \"cage-ds-1\")");
    auto vocab_list = [&](const char* key) {
      const auto& f = detail::field(j, key);
      if (!f.is_array()) fail(std::string("'") + key + "' must be an array of strings");
      std::vector<std::string> out;
      out.reserve(f.size());
      for (const auto& e : f) {
        if (!e.is_string()) fail(std::string("'") + key + "' must be an array of strings");
        out.push_back(e.get<std::string>());
      }
      return out;
    };
    try {
      ds.vocab.object_classes = Vocab(vocab_list("object_classes"));
      ds.vocab.materials = Vocab(vocab_list("materials"));
      ds.vocab.tasks = Vocab(vocab_list("tasks"));
      ds.vocab.states = Vocab(vocab_list("states"));
      ds.vocab.affordances = Vocab(vocab_list("affordances"));
    } catch (const Error& e) {
      fail(e.what());
    }
    auto mi = j.find("meta");
    if (mi != j.end()) {
      if (!mi->is_object()) fail("'meta' must be an object of strings");
      for (auto it = mi->begin(); it != mi->end(); ++it) {
        if (!it.value().is_string()) fail("'meta' must be an object of strings");
        ds.meta.emplace_back(it.key(), it.value().get<std::string>());
      }
    }
  }

  enum Phase { kObjects, kContexts, kGrasps };
  Phase phase = kObjects;
  std::unordered_map<std::string, std::size_t> context_slot;

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto j = parse_line(line);
    std::string type;
    try {
      type = detail::string_field(j, "type");
    } catch (const Error& e) {
      fail(e.what());
    }

    try {
      if (type == "object") {
        if (phase != kObjects) fail("object record after a context or grasp record");
        PartLabeledObject obj;
        obj.id = detail::string_field(j, "id");
        obj.object_class = detail::string_field(j, "class");
        const auto& pts = detail::field(j, "points");
        if (!pts.is_array()) fail("'points' must be an array");
        obj.points.reserve(pts.size());
        for (const auto& p : pts) obj.points.push_back(detail::parse_vec3(p, "point"));
        const auto& parts = detail::field(j, "parts");
        if (!parts.is_array()) fail("'parts' must be an array");
        for (const auto& pj : parts) {
          Part part;
          part.affordance = detail::string_field(pj, "affordance");
          part.material = detail::string_field(pj, "material");
          const auto& idx = detail::field(pj, "points");
          if (!idx.is_array()) fail("part 'points' must be an array of indices");
          for (const auto& e : idx) {
            if (!e.is_number_unsigned()) fail("part point index must be a non-negative integer");
            part.points.push_back(e.get<std::uint32_t>());
          }
          obj.parts.push_back(std::move(part));
        }
        ds.objects.push_back(std::move(obj));
      } else if (type == "context") {
        if (phase == kGrasps) fail("context record after a grasp record");
        phase = kContexts;
        Context ctx;
        ctx.id = detail::string_field(j, "id");
        ctx.task = detail::string_field(j, "task");
        ctx.state = detail::string_field(j, "state");
        ctx.object_id = detail::string_field(j, "object");
        if (!context_slot.emplace(ctx.id, ds.contexts.size()).second)
          fail("duplicate context id '" + ctx.id + "'");
        ds.contexts.push_back(std::move(ctx));
        ds.grasps.emplace_back();
      } else if (type == "grasp") {
        phase = kGrasps;
        const std::string cid = detail::string_field(j, "context_id");
        auto slot = context_slot.find(cid);
        if (slot == context_slot.end()) fail("grasp references unknown context '" + cid + "'");
        LabeledGrasp g;
        g.position = detail::parse_vec3(detail::field(j, "position"), "position");
        const auto& q = detail::field(j, "orientation");
        if (!q.is_array() || q.size() != 4) fail("'orientation' must be an array of 4 numbers");
        for (const auto& e : q)
          if (!e.is_number()) fail("'orientation' must be an array of 4 numbers");
        g.orientation = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                         q[3].get<double>()};
        g.label = grasp_label_from_string(detail::string_field(j, "label"));
        ds.grasps[slot->second].push_back(g);
      } else {
        fail("unknown record type '" + type + "'");
      }
    } catch (const Error& e) {
      std::string w = e.what();
      if (w.rfind(path + ":", 0) == 0) throw;  // already annotated
      fail(w);
    }
  }

  try {
    ds.rebuild_indexes();
    validate(ds);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
  return ds;
}

}  // namespace cage
