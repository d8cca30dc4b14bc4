// Copyright 2026 The metamf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Welch one-tailed (H1: mean(a) > mean(b)) reference values computed
// independently with scipy.stats.ttest_ind(a, b, equal_var=False,
// alternative="greater"), scipy 1.x. Inputs are exact decimal literals.

#include <vector>

namespace metamf::testing {

struct TTestCase {
  std::vector<double> a;
  std::vector<double> b;
  double t;
  double df;
  double p;
};

inline const std::vector<TTestCase>& ttest_oracle_cases() {
  static const std::vector<TTestCase> cases = {
    {{2.1, 2.0, 1.9},
     {1.1, 1.0, 0.9},
     12.247448713915883, 4.0000000000000009, 0.00012760837472096346},
    {{2.01, 2.451, 1.602, 2.176, 3.341, 1.753, 3.155, 2.244, 1.842, 2.692, 2.312, 2.996, 4.056, 2.182, 2.652, 1.725, 1.547, 1.717, 1.585, 3.182, 2.403, 2.912, 3.166, 1.767, 2.006},
     {0.308, 0.204, 0.353, 0.028, 0.871, 0.476, 0.531, 0.634, 0.411, 1.199, 0.409, 0.61, 0.565, 0.66, 0.502, 0.921, 2.037, 0.367, 0.412, 0.692, 0.595, 0.374, 0.677, 1.451, 1.905, 0.45, 1.668, 0.679},
     10.192825741438799, 44.188783896217323, 1.7581243317203478e-13},
    {{1.92, 2.728, 2.062, 2.734, 1.783, 2.647, 2.5, 1.7, 2.987, 2.027, 2.356, 2.155, 2.724, 2.106, 2.406, 3.276},
     {2.032, 0.541, 1.014, 1.367, 1.192, 1.6, 0.69, 1.099, 2.088, 1.179, 1.304, 0.487, 0.38, 1.648, 1.849, 0.766},
     6.711528139869249, 28.959686257822877, 1.1626557443091662e-07},
    {{0.594, 1.2, 0.612, 3.317, 0.466, 0.111, 0.261},
     {1.337, 0.665},
     -0.11890376291407743, 4.6303853239461397, 0.5448320946347317},
    {{0.766, 1.965, 0.553, 0.437, 1.33, 0.867, 0.447, 0.435, 1.329, 0.326, 0.52, 1.422, 1.388, 0.511, 0.909, 0.607, 0.638, 1.053, 0.855, 0.295, 0.766, 0.763, 0.82, 0.4, 0.507, 0.222, 1.021, 1.78, 0.709, 0.532, 0.902, 1.341, 0.234, 0.576, 0.544, 0.675, 0.46, 1.146, 1.45},
     {0.5, 0.701, 1.03, 0.861, 0.766, 1.019, 0.339, 0.207, 0.702, 0.989, 0.362},
     1.1497401011348325, 23.625182993819521, 0.13087859572317798},
    {{0.969, 1.602, 1.423},
     {0.922, 1.024, 0.398, 0.627, 1.075, 0.167, 0.436, 0.748, 0.664},
     3.0740009300640843, 3.2621715966801772, 0.02434809867516162},
    {{0.893, 1.065, 1.824, 1.866, 1.532, 1.574, 1.767, 0.889},
     {0.466, 1.053, 0.461, 0.216, 0.823, 0.201, 0.345, 0.618},
     5.0098691434025691, 12.679670389506756, 0.0001287313886928153},
    {{0.855, 1.276, 0.92, 2.508, 1.281, 1.316, 1.261, 1.202, 0.807, 1.499, 1.143, 1.675, 1.549, 0.935, 2.314, 1.138, 1.118, 0.673, 1.058},
     {0.882, 3.03, 2.348, 2.619, 2.574, 0.124, 1.783, 2.207, 0.457, 0.103, 1.293, 2.254, 2.397, 0.195, 0.254, 0.702, 0.197, 2.037, 2.255, 1.028, 0.053, 0.32, 0.463, 0.188, 1.064, 0.288, 0.338, 3.17, 2.337, 0.652, 0.666, 0.812, 0.84, 0.706, 1.599, 2.468, 2.961, 2.769},
     -0.1829435736140326, 54.782692537311597, 0.57224116557621896},
    {{1.324, 2.638, 0.984, 0.76, 1.112, 0.575, 2.028, 0.53, 0.284, 1.096, 0.671, 0.99, 0.566, 1.212, 0.442, 0.367, 0.986, 1.675, 0.348, 0.674, 0.444, 1.008, 1.392, 0.711, 1.238, 0.416, 1.261, 0.77, 1.331, 0.493, 1.002, 0.605, 0.689, 0.412, 0.792, 2.459},
     {0.196, 1.077, 0.58, 1.671, 0.398, 0.777, 1.343, 0.642, 0.631, 2.049, 0.381, 0.434, 1.059, 0.957, 1.256, 0.4, 0.812, 0.86, 1.234, 0.879, 0.719, 0.831, 1.191, 0.182, 1.047, 0.606, 0.443, 1.072, 0.479, 0.767},
     0.98884617040236156, 63.442870548410959, 0.16324742068306719},
    {{2.918, 2.065, 4.151, 2.711, 1.671, 3.374, 2.757, 2.028, 4.153, 2.336, 4.122, 2.978, 1.789, 1.71, 2.153, 2.39, 2.054, 2.316, 2.078, 2.366, 2.279, 2.784, 2.115},
     {0.321, 1.536, 0.7, 2.358, 0.906, 1.346, 0.956, 0.665, 0.261, 0.214, 0.671, 0.763, 0.667, 0.748, 0.069, 0.119, 0.226, 0.735, 0.425, 0.254, 0.405, 0.291, 0.276, 0.334, 0.165, 0.323, 0.205, 0.554, 0.558, 1.117, 0.71, 0.471, 0.124, 0.272, 0.768, 1.018, 0.2, 0.972, 0.448},
     11.523637581609139, 31.764317634009643, 3.5007019635954981e-13},
    {{0.871, 0.922, 1.169, 0.94},
     {2.216, 2.779, 0.209, 0.204, 0.196, 0.183, 0.594},
     0.15117687299663846, 6.2967193743517544, 0.4422819765262902},
    {{2.526, 3.089, 1.851, 2.097, 2.576, 2.172, 1.99, 3.295, 2.893, 1.944},
     {0.234, 0.223, 1.162, 0.296, 0.481, 0.49, 0.237, 0.916, 0.493, 1.613, 0.593, 0.274, 0.839, 0.998, 0.445, 0.785, 0.29},
     9.7530194254973885, 15.22410600671502, 3.0390502227500454e-08},
    {{1.595, 1.243, 1.041, 0.782, 1.095, 1.977, 0.881, 2.062, 0.407, 3.332, 0.426, 1.405, 0.993, 1.285, 1.005, 0.788, 0.824, 0.782, 1.035, 0.65, 2.257, 1.281, 2.003, 0.438, 0.347, 0.859, 0.425},
     {0.683, 0.137, 0.265, 0.641, 0.021, 0.397, 0.082, 0.038, 0.534, 0.42, 0.273, 0.477, 1.129, 0.24, 2.092, 0.643, 0.953, 1.819, 0.922, 0.521, 0.36},
     3.1229928529194191, 45.983573510033125, 0.0015471545580680402},
    {{0.879, 0.876, 1.689, 0.608, 1.043, 0.919, 0.966, 2.467, 0.964, 1.694, 1.312, 2.114, 2.778, 1.197, 1.656, 1.761, 2.46, 0.885, 1.34, 1.6, 1.691, 0.923, 1.343, 0.833, 1.27, 1.015, 1.535, 1.581, 1.398},
     {0.175, 1.084, 2.059, 0.179, 0.796, 0.105, 0.332, 0.629, 0.842, 0.231, 1.28, 0.038, 0.085, 0.558, 0.748, 0.589, 0.311, 0.23, 1.452, 1.026, 0.322, 0.263, 1.342, 0.08, 0.596, 0.958, 0.214, 2.685, 0.073, 0.524, 0.263, 0.648, 0.276, 0.388, 1.041, 0.09, 1.259},
     5.4861466657191826, 62.377160431837275, 3.9734498724992112e-07},
    {{0.201, 0.311, 0.347, -0.041, 0.238, -0.365, 0.388, 0.101, 0.022, 0.096, 0.121, -0.167, 0.365, -0.307},
     {0.694, 1.425, 0.142, 1.142, 1.295, 0.799, 1.731, 0.511, 0.35, 1.762, 0.518, 0.226, 0.567, 0.688, 0.118, 1.314, 1.12, 0.929, 0.736, 0.022, 1.795, 0.754, 0.531, 0.082, 0.384, 0.28, 0.042, 0.382, 0.64, 0.078, 0.73, 0.481, 0.64, 1.336, 0.237, 0.374, 0.863, 0.36},
     -5.7234971317915537, 45.79173703429759, 0.99999961957789552},
    {{2.498, 2.249, 2.367},
     {0.477, 1.044, 0.833, 0.779, 0.422, 0.405, 0.428, 1.376, 0.058},
     11.403804673800369, 9.9574153007455877, 2.4473638193923471e-07},
    {{1.719, 1.547, 2.597, 2.243, 3.04, 2.766, 2.123, 2.84, 1.903, 3.074, 3.279, 1.953, 1.989, 2.693, 2.161, 2.162, 2.007, 4.284, 1.579, 2.458, 2.178, 2.111, 1.989, 2.394, 3.894, 1.601, 1.621, 2.129, 1.72},
     {0.861, 3.66, 0.368, 1.133, 1.42, 1.13, 1.029, 0.842, 1.72, 1.234, 1.3, 0.662, 1.302, 1.2, 1.162, 2.329, 0.613, 0.655, 0.99, 0.949, 0.696, 2.333},
     5.476261434361005, 43.397008042842074, 1.0243177590205092e-06},
    {{0.478, -0.208, -0.382, -0.175, 0.291, -0.366, 0.648, -0.346, 1.141, -0.198, -0.007, 0.359, 0.955, -0.175, -0.387, 1.611, -0.068, 0.399, 0.035, -0.061, 0.099, 1.938, 0.218, 0.043, 0.044, 1.067, -0.006, -0.252, -0.048, 0.128},
     {0.083, 0.528, 0.817, 0.421, 0.594, 1.072, 0.117, 0.979, 0.445, 0.6, 0.326, 0.737, 0.614, 1.159, 0.164, 0.316, 0.413, 0.836},
     -2.6094465983912345, 45.66337113768185, 0.99388991312685271},
    {{0.164, 0.972, 0.149, 1.093, -0.027, 0.457, 0.122, 1.858, 1.119, 0.416, 0.449, 0.495, 0.868, 0.314, 1.192},
     {0.413, 1.412, 0.289, 1.032, 0.898, 0.968, 1.084},
     -1.138839292357557, 15.484860155309116, 0.86395865700221319},
    {{1.219, 0.744, 0.626, 0.185},
     {0.033, 0.335, 0.261, 0.553, 0.894, 0.754, 1.266, 0.107, 0.285, 0.584, 1.648, 0.224, 0.178, 0.363, 0.423, 0.383, 1.568, 0.161, 0.26, 0.253, 1.601},
     0.48118057681983922, 4.859935059316328, 0.32563421867644393},
  };
  return cases;
}

}  // namespace metamf::testing
