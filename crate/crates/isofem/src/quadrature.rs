//! Quadrature rules on the reference simplices.
//!
//! One rule per intrinsic dimension, hardcoded:
//! 1D Gauss-Legendre (6 points, exact through degree 11, stated degree 10),
//! 2D Dunavant (16 points, degree 8),
//! 3D conical-product Gauss-Jacobi (64 points, degree 7).
//! Node coordinates and weights carry 20 significant digits; weights sum to
//! the reference measure (1, 1/2, 1/6).

use crate::error::{Error, Result};

/// Nodes and weights for integration over the unit reference simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Intrinsic dimension (1, 2 or 3).
    pub d: usize,
    /// Stated polynomial exactness degree.
    pub degree: usize,
    /// Node coordinates, `len = q * d`, node-major.
    pub nodes: Vec<f64>,
    /// Positive weights, `len = q`.
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Coordinates of node `i`.
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.d..(i + 1) * self.d]
    }

    /// Apply the rule to a function of reference coordinates.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.node(i))).sum()
    }
}

/// The hardcoded rule for intrinsic dimension `d`.
pub fn quadrature_rule(d: usize) -> Result<QuadratureRule> {
    match d {
        1 => {
            let mut nodes = Vec::with_capacity(6);
            let mut weights = Vec::with_capacity(6);
            for &(x, w) in &GAUSS6_1D {
                nodes.push(x);
                weights.push(w);
            }
            Ok(QuadratureRule { d: 1, degree: 10, nodes, weights })
        }
        2 => {
            let mut nodes = Vec::with_capacity(32);
            let mut weights = Vec::with_capacity(16);
            for &(x, y, w) in &DUNAVANT8_2D {
                nodes.extend_from_slice(&[x, y]);
                weights.push(w);
            }
            Ok(QuadratureRule { d: 2, degree: 8, nodes, weights })
        }
        3 => {
            let mut nodes = Vec::with_capacity(192);
            let mut weights = Vec::with_capacity(64);
            for &(x, y, z, w) in &CONICAL7_3D {
                nodes.extend_from_slice(&[x, y, z]);
                weights.push(w);
            }
            Ok(QuadratureRule { d: 3, degree: 7, nodes, weights })
        }
        _ => Err(Error::UnsupportedElement { d, p: 0 }),
    }
}

/// Exact integral of the monomial `prod_k xi_k^{e_k}` over the unit simplex:
/// `e1!*...*ed! / (e1+...+ed+d)!`.
pub fn monomial_integral(exponents: &[usize]) -> f64 {
    // factorial ratio evaluated in f64; fine for the degrees used here
    let d = exponents.len();
    let total: usize = exponents.iter().sum();
    let mut value = 1.0;
    for &e in exponents {
        for k in 2..=e {
            value *= k as f64;
        }
    }
    for k in 2..=(total + d) {
        value /= k as f64;
    }
    value
}

// Gauss-Legendre, 6 points on [0,1].
const GAUSS6_1D: [(f64, f64); 6] = [
    (0.033765242898423986094, 0.085662246189585172520),
    (0.16939530676686774317, 0.18038078652406930378),
    (0.38069040695840154568, 0.23395696728634552369),
    (0.61930959304159845432, 0.23395696728634552369),
    (0.83060469323313225683, 0.18038078652406930378),
    (0.96623475710157601391, 0.085662246189585172520),
];

// Dunavant degree 8, 16 points on the unit triangle. Orbits: centroid,
// three 3-point orbits, one 6-point orbit; weights sum to 1/2.
const DUNAVANT8_2D: [(f64, f64, f64); 16] = [
    (0.33333333333333333333, 0.33333333333333333333, 0.072157803838893584126),
    (0.45929258829272315603, 0.081414823414553687942, 0.047545817133642312397),
    (0.081414823414553687942, 0.45929258829272315603, 0.047545817133642312397),
    (0.45929258829272315603, 0.45929258829272315603, 0.047545817133642312397),
    (0.17056930775176020662, 0.65886138449647958676, 0.051608685267359125141),
    (0.65886138449647958676, 0.17056930775176020662, 0.051608685267359125141),
    (0.17056930775176020662, 0.17056930775176020662, 0.051608685267359125141),
    (0.050547228317030975458, 0.89890554336593804908, 0.016229248811599040155),
    (0.89890554336593804908, 0.050547228317030975458, 0.016229248811599040155),
    (0.050547228317030975458, 0.050547228317030975458, 0.016229248811599040155),
    (0.72849239295540428124, 0.0083947774099576053372, 0.013615157087217497132),
    (0.0083947774099576053372, 0.72849239295540428124, 0.013615157087217497132),
    (0.26311282963463811342, 0.0083947774099576053372, 0.013615157087217497132),
    (0.0083947774099576053372, 0.26311282963463811342, 0.013615157087217497132),
    (0.26311282963463811342, 0.72849239295540428124, 0.013615157087217497132),
    (0.72849239295540428124, 0.26311282963463811342, 0.013615157087217497132),
];

// Conical-product Gauss-Jacobi rule on the unit tetrahedron, degree 7,
// 4x4x4 points via the collapsed-coordinate map; weights sum to 1/6.
#[rustfmt::skip]
const CONICAL7_3D: [(f64, f64, f64, f64); 64] = [
    (0.048500549446997329297, 0.054334611227234484582, 0.062291809348452679941, 0.0026134590075074049132),
    (0.048500549446997329297, 0.054334611227234484582, 0.29607290049207681229, 0.0048996144598887556444),
    (0.048500549446997329297, 0.054334611227234484582, 0.60109193883369137383, 0.0048996144598887556444),
    (0.048500549446997329297, 0.054334611227234484582, 0.83487302997731550618, 0.0026134590075074049132),
    (0.048500549446997329297, 0.26341597536611224698, 0.047774904647816904137, 0.0039241267807630788951),
    (0.048500549446997329297, 0.26341597536611224698, 0.22707406860967843319, 0.0073568050090829740061),
    (0.048500549446997329297, 0.26341597536611224698, 0.46100940657721199054, 0.0073568050090829740061),
    (0.048500549446997329297, 0.26341597536611224698, 0.64030857053907351959, 0.0039241267807630788951),
    (0.048500549446997329297, 0.55528597574701361908, 0.027509832253848281978, 0.0025043094430090212407),
    (0.048500549446997329297, 0.55528597574701361908, 0.13075420207953336913, 0.0046949849696344204608),
    (0.048500549446997329297, 0.55528597574701361908, 0.26545927272645568249, 0.0046949849696344204608),
    (0.048500549446997329297, 0.55528597574701361908, 0.36870364255214076965, 0.0025043094430090212407),
    (0.048500549446997329297, 0.81851801642053328617, 0.0092331462165736250062, 0.00060137292872017588347),
    (0.048500549446997329297, 0.81851801642053328617, 0.043885133689350809079, 0.0011274313042136648771),
    (0.048500549446997329297, 0.81851801642053328617, 0.089096300443118575453, 0.0011274313042136648771),
    (0.048500549446997329297, 0.81851801642053328617, 0.12374828791589575953, 0.00060137292872017588347),
    (0.23860073755186230506, 0.043479092804287573526, 0.049846521368884259220, 0.0033810895785649219597),
    (0.23860073755186230506, 0.043479092804287573526, 0.23692046057885845488, 0.0063387393265891631693),
    (0.23860073755186230506, 0.043479092804287573526, 0.48099970906499166654, 0.0063387393265891631693),
    (0.23860073755186230506, 0.043479092804287573526, 0.66807364827496586219, 0.0033810895785649219597),
    (0.23860073755186230506, 0.21078806639798720745, 0.038229950780567063369, 0.0050767293939918319495),
    (0.23860073755186230506, 0.21078806639798720745, 0.18170691350375721848, 0.0095176609528948894366),
    (0.23860073755186230506, 0.21078806639798720745, 0.36890428254639326901, 0.0095176609528948894366),
    (0.23860073755186230506, 0.21078806639798720745, 0.51238124526958342412, 0.0050767293939918319495),
    (0.23860073755186230506, 0.44434532477748304968, 0.022013639604288231464, 0.0032398803788146024870),
    (0.23860073755186230506, 0.44434532477748304968, 0.10463080453434875337, 0.0060740056403218362380),
    (0.23860073755186230506, 0.44434532477748304968, 0.21242313313630589189, 0.0060740056403218362380),
    (0.23860073755186230506, 0.44434532477748304968, 0.29504029806636641380, 0.0032398803788146024870),
    (0.23860073755186230506, 0.65498620481693140479, 0.0073884548386119780235, 0.00077800942593169456439),
    (0.23860073755186230506, 0.65498620481693140479, 0.035117317623346661432, 0.0014585827526946124576),
    (0.23860073755186230506, 0.65498620481693140479, 0.071295740007859628718, 0.0014585827526946124576),
    (0.23860073755186230506, 0.65498620481693140479, 0.099024602792594312127, 0.00077800942593169456439),
    (0.51704729510436750234, 0.027578625974396982064, 0.031617462101731879930, 0.0016175887234345118557),
    (0.51704729510436750234, 0.027578625974396982064, 0.15027776217405058363, 0.0030325943803693930478),
    (0.51704729510436750234, 0.027578625974396982064, 0.30509631674718493196, 0.0030325943803693930478),
    (0.51704729510436750234, 0.027578625974396982064, 0.42375661681950363567, 0.0016175887234345118557),
    (0.51704729510436750234, 0.13370208226799037983, 0.024249114818074013042, 0.0024288206593849718758),
    (0.51704729510436750234, 0.13370208226799037983, 0.11525601573701776767, 0.0045534614428672772414),
    (0.51704729510436750234, 0.13370208226799037983, 0.23399460689062435016, 0.0045534614428672772414),
    (0.51704729510436750234, 0.13370208226799037983, 0.32500150780956810479, 0.0024288206593849718758),
    (0.51704729510436750234, 0.28184657786378006035, 0.013963169280339018646, 0.0015500310903539122161),
    (0.51704729510436750234, 0.28184657786378006035, 0.066366928046127286583, 0.0029059398757581792180),
    (0.51704729510436750234, 0.28184657786378006035, 0.13473919898572515073, 0.0029059398757581792180),
    (0.51704729510436750234, 0.28184657786378006035, 0.18714295775151341866, 0.0015500310903539122161),
    (0.51704729510436750234, 0.41545530037495701804, 0.0046864692747846334477, 0.00037221707525626332740),
    (0.51704729510436750234, 0.41545530037495701804, 0.022274783246233517551, 0.00069781854580626004713),
    (0.51704729510436750234, 0.41545530037495701804, 0.045222621274441962068, 0.00069781854580626004713),
    (0.51704729510436750234, 0.41545530037495701804, 0.062810935245890846172, 0.00037221707525626332740),
    (0.79585141789677286330, 0.011657740668923397092, 0.013364994112965894183, 0.00024398542162060539392),
    (0.79585141789677286330, 0.011657740668923397092, 0.063523802141471031853, 0.00045741467393993005075),
    (0.79585141789677286330, 0.011657740668923397092, 0.12896703929283270775, 0.00045741467393993005075),
    (0.79585141789677286330, 0.011657740668923397092, 0.17912584732133784542, 0.00024398542162060539392),
    (0.79585141789677286330, 0.056517108699407352174, 0.010250325460829472505, 0.00036634579855543266760),
    (0.79585141789677286330, 0.056517108699407352174, 0.048719785505009590947, 0.00068681129750477072651),
    (0.79585141789677286330, 0.056517108699407352174, 0.098911687898810193576, 0.00068681129750477072651),
    (0.79585141789677286330, 0.056517108699407352174, 0.13738114794299031202, 0.00036634579855543266760),
    (0.79585141789677286330, 0.11913915929712363903, 0.0059023610000580984329, 0.00023379551527910784233),
    (0.79585141789677286330, 0.11913915929712363903, 0.028053915262969075135, 0.00043831102153432710143),
    (0.79585141789677286330, 0.11913915929712363903, 0.056955507543134422534, 0.00043831102153432710143),
    (0.79585141789677286330, 0.11913915929712363903, 0.079107061806045399236, 0.00023379551527910784233),
    (0.79585141789677286330, 0.17561680396250496583, 0.0019810139747004327449, 0.000056142540266951042585),
    (0.79585141789677286330, 0.17561680396250496583, 0.0094157572165539286239, 0.00010525391877839149598),
    (0.79585141789677286330, 0.17561680396250496583, 0.019116020924168242238, 0.00010525391877839149598),
    (0.79585141789677286330, 0.17561680396250496583, 0.026550764166021738117, 0.000056142540266951042585),
];
