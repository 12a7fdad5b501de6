use std::collections::HashMap;

/// Geodesic sphere from a recursively subdivided icosahedron.
///
/// The vertex set is centrally symmetric; `antipode[i]` is the index of
/// `-vertices[i]`. `hemisphere` lists one vertex of each antipodal pair.
#[derive(Clone, Debug)]
pub struct Tessellation {
    vertices: Vec<[f64; 3]>,
    neighbors: Vec<Vec<usize>>,
    antipode: Vec<usize>,
    hemisphere: Vec<usize>,
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

impl Tessellation {
    /// `levels` subdivisions: 0 → 12 vertices, 3 → 642 vertices.
    pub fn icosahedron(levels: usize) -> Self {
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<[f64; 3]> = [
            [-1.0, p, 0.0],
            [1.0, p, 0.0],
            [-1.0, -p, 0.0],
            [1.0, -p, 0.0],
            [0.0, -1.0, p],
            [0.0, 1.0, p],
            [0.0, -1.0, -p],
            [0.0, 1.0, -p],
            [p, 0.0, -1.0],
            [p, 0.0, 1.0],
            [-p, 0.0, -1.0],
            [-p, 0.0, 1.0],
        ]
        .into_iter()
        .map(normalize)
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];

        for _ in 0..levels {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    let (u, v) = (verts[key.0], verts[key.1]);
                    verts.push(normalize([u[0] + v[0], u[1] + v[1], u[2] + v[2]]));
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for &[a, b, c] in &faces {
                let ab = midpoint(a, b, &mut vertices);
                let bc = midpoint(b, c, &mut vertices);
                let ca = midpoint(c, a, &mut vertices);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }

        let mut neighbors = vec![Vec::new(); vertices.len()];
        for &[a, b, c] in &faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                neighbors[u].push(v);
                neighbors[v].push(u);
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }

        let antipode: Vec<usize> = vertices
            .iter()
            .map(|v| {
                vertices
                    .iter()
                    .enumerate()
                    .map(|(j, w)| (j, (v[0] + w[0]).abs() + (v[1] + w[1]).abs() + (v[2] + w[2]).abs()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(j, _)| j)
                    .expect("non-empty vertex set")
            })
            .collect();

        let hemisphere = (0..vertices.len())
            .filter(|&i| {
                let v = vertices[i];
                let w = vertices[antipode[i]];
                // lexicographic on (y, z, x) picks exactly one of each pair
                (v[1], v[2], v[0]) > (w[1], w[2], w[0])
            })
            .collect();

        Self {
            vertices,
            neighbors,
            antipode,
            hemisphere,
        }
    }

    /// The default three-level tessellation (642 vertices).
    pub fn default_odf() -> Self {
        Self::icosahedron(3)
    }

    /// Same connectivity with every vertex mapped through `f`.
    pub fn map_vertices(&self, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            ..self.clone()
        }
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn antipode(&self, i: usize) -> usize {
        self.antipode[i]
    }

    pub fn hemisphere(&self) -> &[usize] {
        &self.hemisphere
    }

    pub fn hemisphere_vertices(&self) -> Vec<[f64; 3]> {
        self.hemisphere.iter().map(|&i| self.vertices[i]).collect()
    }
}
