// Three orthonormal columns and b = (3, 2, 1): the LARS path admits one
// column per step and lands on b. Prints the path for LARS, bLARS and T-bLARS.
#include <iostream>

#include "calars/calars.hpp"

int main()
{
    using namespace calars;
    const auto a = make_normalized_dense(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const std::vector<double> b{3, 2, 1};

    const auto show = [](const char* name, const SolutionPath& p) {
        std::cout << name << '\n';
        write_path_csv(p, std::cout);
        std::cout << '\n';
    };
    show("lars", lars_fit(a, b, 3));
    show("blars b=2 P=3", blars_fit(a, b, BlarsConfig{2, 3, 3}).path);
    show("tblars b=1 P=2", tblars_fit(a, b, TblarsConfig{1, 3, 2, {}}).path);
}
