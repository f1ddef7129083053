#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ddcmix/model.hpp"

namespace ddcmix {

void PanelData::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("PanelData::save_csv: cannot open " + path);
  out << "market,period,firm,state_index,action\n";
  for (int i = 0; i < num_markets; ++i)
    for (int t = 0; t < num_periods; ++t)
      for (int j = 0; j < num_firms; ++j)
        out << i << ',' << t << ',' << j << ',' << states(i, t) << ',' << actions[j](i, t) << '\n';
  if (!out) throw std::runtime_error("PanelData::save_csv: write failed for " + path);
}

PanelData PanelData::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("PanelData::load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("PanelData::load_csv: empty file " + path);
  if (line.rfind("market,period,firm,state_index,action", 0) != 0)
    throw std::runtime_error("PanelData::load_csv: unexpected header in " + path);

  struct Row {
    int market, period, firm, state, action;
  };
  std::vector<Row> rows;
  int max_market = -1, max_period = -1, max_firm = -1;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Row r{};
    char c1, c2, c3, c4;
    if (!(ss >> r.market >> c1 >> r.period >> c2 >> r.firm >> c3 >> r.state >> c4 >> r.action) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',')
      throw std::runtime_error("PanelData::load_csv: parse error at line " + std::to_string(lineno) +
                               " of " + path);
    if (r.market < 0 || r.period < 0 || r.firm < 0 || r.state < 0 || r.action < 0)
      throw std::runtime_error("PanelData::load_csv: negative index at line " +
                               std::to_string(lineno) + " of " + path);
    max_market = std::max(max_market, r.market);
    max_period = std::max(max_period, r.period);
    max_firm = std::max(max_firm, r.firm);
    rows.push_back(r);
  }
  if (rows.empty()) throw std::runtime_error("PanelData::load_csv: no data rows in " + path);

  PanelData panel;
  panel.num_markets = max_market + 1;
  panel.num_periods = max_period + 1;
  panel.num_firms = max_firm + 1;
  panel.states = Eigen::MatrixXi::Constant(panel.num_markets, panel.num_periods, -1);
  panel.actions.assign(panel.num_firms,
                       Eigen::MatrixXi::Constant(panel.num_markets, panel.num_periods, -1));
  for (const auto& r : rows) {
    panel.states(r.market, r.period) = r.state;
    panel.actions[r.firm](r.market, r.period) = r.action;
  }
  if ((panel.states.array() < 0).any())
    throw std::runtime_error("PanelData::load_csv: panel is not rectangular (missing state rows)");
  for (const auto& a : panel.actions)
    if ((a.array() < 0).any())
      throw std::runtime_error("PanelData::load_csv: panel is not rectangular (missing action rows)");
  return panel;
}

}  // namespace ddcmix
