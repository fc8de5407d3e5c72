#include "poison/serialization.hpp"

#include "poison/error.hpp"
#include "poison/format.hpp"

#include <fstream>
#include <sstream>

namespace poison {

namespace {

Json vec_to_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vec_from_json(const Json& j) {
  std::vector<double> values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

template <typename T>
T field(const Json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("JSON record is missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("JSON field '") + key + "' has the wrong type");
  }
}

Json field_json(const Json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("JSON record is missing '") + key + "'");
  return j.at(key);
}

Json loss_to_json(const LossSpec& loss) { return to_string(loss); }

}  // namespace

Json model_to_json(const ModelParams& model) {
  return {{"d", model.theta.size()}, {"theta", vec_to_json(model.theta)}, {"loss", loss_to_json(model.loss)},
          {"lambda", model.lambda}};
}

ModelParams model_from_json(const Json& j) {
  ModelParams model;
  model.theta = vec_from_json(field_json(j, "theta"));
  if (field<Index>(j, "d") != model.theta.size()) throw ValidationError("model dimension does not match theta");
  if (!model.theta.allFinite()) throw ValidationError("model parameters must be finite");
  model.loss = parse_loss(field<std::string>(j, "loss"));
  model.lambda = field<double>(j, "lambda");
  return model;
}

Json points_to_json(const Dataset& data) {
  Json points = Json::array();
  for (Index i = 0; i < data.size(); ++i)
    points.push_back({{"x", vec_to_json(data.x(i).transpose())}, {"y", data.y(i)}, {"w", data.w(i)}});
  return {{"d", data.dim()}, {"domain", to_string(data.domain())}, {"points", points}};
}

Dataset points_from_json(const Json& j) {
  Dataset data(field<Index>(j, "d"), parse_domain(field<std::string>(j, "domain")));
  for (const auto& p : field_json(j, "points")) data.add(vec_from_json(field_json(p, "x")), field<int>(p, "y"), field<double>(p, "w"));
  return data;
}

Json result_to_json(const AttackResult& result) {
  Json defenses = Json::array();
  for (const auto& r : result.defenses) {
    defenses.push_back({{"defense", to_string(r.kind)},
                        {"p", r.p},
                        {"tau_minus", r.tau.minus},
                        {"tau_plus", r.tau.plus},
                        {"removed_counts", {{"clean", r.removed_clean}, {"poison", r.removed_poison}}},
                        {"test_error", r.test_error}});
  }
  Json j = {{"attack", result.attack},
            {"epsilon", result.epsilon},
            {"seed", result.seed},
            {"poison", points_to_json(result.poison)},
            {"defenses", defenses},
            {"min_over_defense", result.min_over_defense},
            {"clean_error", result.clean_error},
            {"seconds", result.seconds},
            {"decoy", nullptr}};
  if (result.decoy) {
    j["decoy"] = {{"index", result.decoy->index},
                  {"gamma", result.decoy->gamma},
                  {"repeats", result.decoy->repeats},
                  {"test_error", result.decoy->test_error},
                  {"clean_loss", result.decoy->clean_loss}};
  }
  return j;
}

AttackResult result_from_json(const Json& j) {
  AttackResult result;
  result.attack = field<std::string>(j, "attack");
  result.epsilon = field<double>(j, "epsilon");
  result.seed = field<std::uint64_t>(j, "seed");
  result.poison = points_from_json(field_json(j, "poison"));
  for (const auto& r : field_json(j, "defenses")) {
    DefenseReport report;
    report.kind = parse_defense(field<std::string>(r, "defense"));
    report.p = field<double>(r, "p");
    report.tau = {field<double>(r, "tau_minus"), field<double>(r, "tau_plus")};
    Json removed = field_json(r, "removed_counts");
    report.removed_clean = field<Index>(removed, "clean");
    report.removed_poison = field<Index>(removed, "poison");
    report.test_error = field<double>(r, "test_error");
    result.defenses.push_back(report);
  }
  result.min_over_defense = field<double>(j, "min_over_defense");
  result.clean_error = field<double>(j, "clean_error");
  result.seconds = field<double>(j, "seconds");
  if (j.contains("decoy") && !j.at("decoy").is_null()) {
    const Json& d = j.at("decoy");
    result.decoy = DecoyProvenance{field<Index>(d, "index"), field<double>(d, "gamma"), field<double>(d, "repeats"),
                                   field<double>(d, "test_error"), field<double>(d, "clean_loss")};
  }
  return result;
}

std::string result_to_csv(const AttackResult& result) {
  std::ostringstream out;
  out << "attack,epsilon,defense,p,tau_minus,tau_plus,removed_clean,removed_poison,test_error\n";
  for (const auto& r : result.defenses) {
    out << result.attack << ',' << format_double(result.epsilon) << ',' << to_string(r.kind) << ','
        << format_double(r.p) << ',' << format_double(r.tau.minus) << ',' << format_double(r.tau.plus) << ','
        << r.removed_clean << ',' << r.removed_poison << ',' << format_double(r.test_error) << '\n';
  }
  return out.str();
}

Json decoys_to_json(const std::vector<DecoyParams>& decoys) {
  Json out = Json::array();
  for (const auto& d : decoys) {
    out.push_back({{"theta_decoy", model_to_json(d.model)},
                   {"gamma", d.gamma},
                   {"quantile", d.quantile},
                   {"r", d.repeats},
                   {"flip_weight", d.flip_weight},
                   {"train_loss_on_clean", d.train_loss_on_clean},
                   {"test_error", d.test_error}});
  }
  return out;
}

std::vector<DecoyParams> decoys_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("decoy file must hold a JSON array");
  std::vector<DecoyParams> out;
  for (const auto& d : j) {
    DecoyParams decoy;
    decoy.model = model_from_json(field_json(d, "theta_decoy"));
    decoy.gamma = field<double>(d, "gamma");
    decoy.quantile = field<double>(d, "quantile");
    decoy.repeats = field<double>(d, "r");
    decoy.flip_weight = field<double>(d, "flip_weight");
    decoy.train_loss_on_clean = field<double>(d, "train_loss_on_clean");
    decoy.test_error = field<double>(d, "test_error");
    out.push_back(std::move(decoy));
  }
  return out;
}

Json feasible_to_json(const FeasibleSet& set) {
  Json classes = Json::object();
  for (int y : {-1, 1}) {
    const ClassConstraints& c = set.at(y);
    Json entry = Json::object();
    if (c.ball) entry["ball"] = {{"center", vec_to_json(c.ball->center)}, {"radius", c.ball->radius}};
    if (c.slab) {
      entry["slab"] = {{"axis", vec_to_json(c.slab->axis)},
                       {"center", vec_to_json(c.slab->center)},
                       {"half_width", c.slab->half_width}};
    }
    if (c.decoy) {
      entry["decoy"] = {{"theta", vec_to_json(c.decoy->theta)}, {"loss", loss_to_json(c.decoy->loss)}, {"cap", c.decoy->cap}};
    }
    Json halfspaces = Json::array();
    for (const auto& h : c.halfspaces) halfspaces.push_back({{"normal", vec_to_json(h.normal)}, {"offset", h.offset}});
    entry["halfspaces"] = halfspaces;
    if (c.expected_norm) {
      const auto& e = *c.expected_norm;
      entry["expected_norm"] = {{"mu", vec_to_json(e.mu)},
                                {"tau", e.tau},
                                {"pieces", std::vector<int>(e.pieces.data(), e.pieces.data() + e.pieces.size())}};
    }
    classes[y > 0 ? "+1" : "-1"] = entry;
  }
  return {{"d", set.dim()}, {"domain", to_string(set.domain())}, {"classes", classes}};
}

FeasibleSet feasible_from_json(const Json& j) {
  FeasibleSet set(field<Index>(j, "d"), parse_domain(field<std::string>(j, "domain")));
  Json classes = field_json(j, "classes");
  for (int y : {-1, 1}) {
    const char* key = y > 0 ? "+1" : "-1";
    if (!classes.contains(key)) continue;
    const Json& entry = classes.at(key);
    ClassConstraints& c = set.at(y);
    if (entry.contains("ball"))
      c.ball = BallAtom{vec_from_json(field_json(entry["ball"], "center")), field<double>(entry["ball"], "radius")};
    if (entry.contains("slab")) {
      const Json& s = entry["slab"];
      c.slab = SlabConstraint{vec_from_json(field_json(s, "axis")), vec_from_json(field_json(s, "center")),
                              field<double>(s, "half_width")};
    }
    if (entry.contains("decoy")) {
      const Json& d = entry["decoy"];
      c.decoy = DecoyCap{vec_from_json(field_json(d, "theta")), parse_loss(field<std::string>(d, "loss")),
                         field<double>(d, "cap")};
    }
    if (entry.contains("halfspaces"))
      for (const auto& h : entry["halfspaces"])
        c.halfspaces.push_back(HalfspaceAtom{vec_from_json(field_json(h, "normal")), field<double>(h, "offset")});
    if (entry.contains("expected_norm")) {
      const Json& e = entry["expected_norm"];
      std::vector<int> pieces = field<std::vector<int>>(e, "pieces");
      c.expected_norm = ExpectedNormConstraint{vec_from_json(field_json(e, "mu")), field<double>(e, "tau"),
                                               Eigen::Map<const Eigen::VectorXi>(pieces.data(), pieces.size())};
    }
  }
  return set;
}

std::string influence_trace_csv(const std::vector<InfluenceTraceRow>& rows) {
  std::ostringstream out;
  out << "iter,test_loss,test_error,point_moved_norm\n";
  for (const auto& r : rows) {
    out << r.iter << ',' << format_double(r.test_loss) << ',' << format_double(r.test_error) << ','
        << format_double(r.point_moved_norm) << '\n';
  }
  return out.str();
}

std::string minmax_trace_csv(const std::vector<MinMaxTraceRow>& rows) {
  std::ostringstream out;
  out << "t,max_loss,margin,label,clean_loss,bound\n";
  for (const auto& r : rows) {
    out << r.t << ',' << format_double(r.max_loss) << ',' << format_double(r.margin) << ',' << r.label << ','
        << format_double(r.clean_loss) << ',' << format_double(r.bound) << '\n';
  }
  return out.str();
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace poison
