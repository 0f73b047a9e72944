#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "prodexp/datamodel.hpp"

namespace prodexp {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index or -1.
    int column(const std::string& name) const;
};

// RFC 4180-style: comma separated, double quotes escape commas and quotes.
CsvTable read_csv(std::istream& in);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest round-trippable representation (17 significant digits).
std::string format_double(double v);

struct PanelLoad {
    Panel panel;
    std::map<std::string, std::size_t> rejected;  // reason -> row count
};

// Panel schema: firm_id, year, output, labor, capital, materials, investment,
// belief_mu_y, belief_sigma2_y, belief_mu_l, belief_sigma2_l, belief_mu_m,
// belief_sigma2_m, mgmt. Level columns are logged here; rows with a
// non-positive or missing output/labor/capital are rejected with a reason.
PanelLoad read_panel_csv(std::istream& in);
PanelLoad read_panel_csv(const std::string& path);
void write_panel_csv(std::ostream& out, const Panel& panel);

}  // namespace prodexp
