#include "saver/linearization.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace saver {

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

void export_sensitivity_csv(const SensitivityModel<double>& m, const std::string& r_path,
                            const std::string& x_path) {
  for (const auto& [path, mat] : {std::pair{r_path, &m.R}, std::pair{x_path, &m.X}}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    write_matrix_csv(out, *mat);
  }
}

}  // namespace saver
