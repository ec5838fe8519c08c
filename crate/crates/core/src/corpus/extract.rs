use super::{CorpusError, Post, Result, Thread};
use std::collections::HashMap;

/// Splits a forest of posts into one thread per root-to-leaf path.
///
/// Roots are visited in input order and children in the order they appear
/// in `forest`. The thread id is the id of the leaf post.
pub fn extract_threads(forest: &[Post]) -> Result<Vec<Thread>> {
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(forest.len());
    for (i, p) in forest.iter().enumerate() {
        if index.insert(p.post_id.as_str(), i).is_some() {
            return Err(CorpusError::DuplicatePost(p.post_id.clone()));
        }
    }

    let mut parent: Vec<Option<usize>> = Vec::with_capacity(forest.len());
    for p in forest {
        match (&p.parent_id, p.is_submission) {
            (None, true) => parent.push(None),
            (Some(pid), false) => match index.get(pid.as_str()) {
                Some(&j) => parent.push(Some(j)),
                None => {
                    return Err(CorpusError::OrphanPost {
                        post_id: p.post_id.clone(),
                        parent_id: pid.clone(),
                    })
                }
            },
            _ => {
                return Err(CorpusError::InvalidPost {
                    post_id: p.post_id.clone(),
                    reason: "a post is a submission exactly when it has no parent".into(),
                })
            }
        }
    }

    // Every post must reach a root; 0 = unvisited, 1 = on stack, 2 = rooted.
    let mut state = vec![0u8; forest.len()];
    for start in 0..forest.len() {
        let mut chain = Vec::new();
        let mut cur = Some(start);
        while let Some(i) = cur {
            match state[i] {
                2 => break,
                1 => {
                    return Err(CorpusError::Cycle {
                        post_id: forest[i].post_id.clone(),
                    })
                }
                _ => {
                    state[i] = 1;
                    chain.push(i);
                    cur = parent[i];
                }
            }
        }
        for i in chain {
            state[i] = 2;
        }
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); forest.len()];
    for (i, p) in parent.iter().enumerate() {
        if let Some(j) = p {
            children[*j].push(i);
        }
    }

    let mut threads = Vec::new();
    for root in (0..forest.len()).filter(|&i| parent[i].is_none()) {
        // Explicit stack of (node, next child cursor) keeps deep chains off
        // the call stack.
        let mut path = vec![root];
        let mut cursor = vec![0usize];
        while let Some(&node) = path.last() {
            let k = *cursor.last().unwrap();
            if children[node].is_empty() {
                let posts = path.iter().map(|&i| forest[i].clone()).collect();
                threads.push(Thread::from_posts(forest[node].post_id.clone(), posts));
            }
            if k < children[node].len() {
                *cursor.last_mut().unwrap() += 1;
                path.push(children[node][k]);
                cursor.push(0);
            } else {
                path.pop();
                cursor.pop();
            }
        }
    }
    Ok(threads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, parent: Option<&str>, author: &str) -> Post {
        Post {
            post_id: id.into(),
            author_id: author.into(),
            parent_id: parent.map(Into::into),
            body: format!("body of {id}"),
            quote_ranges: vec![],
            url_ranges: vec![],
            is_submission: parent.is_none(),
        }
    }

    fn ids(t: &Thread) -> Vec<&str> {
        t.posts.iter().map(|p| p.post_id.as_str()).collect()
    }

    #[test]
    fn root_with_two_leaves() {
        let f = [post("r", None, "a"), post("x", Some("r"), "b"), post("y", Some("r"), "c")];
        let t = extract_threads(&f).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|t| t.posts.len() == 2));
    }

    #[test]
    fn chain_with_sibling() {
        let f = [
            post("root", None, "a"),
            post("c1", Some("root"), "b"),
            post("c2", Some("c1"), "a"),
            post("c1p", Some("root"), "c"),
        ];
        let t = extract_threads(&f).unwrap();
        assert_eq!(ids(&t[0]), ["root", "c1", "c2"]);
        assert_eq!(ids(&t[1]), ["root", "c1p"]);
        assert_eq!(t[0].user_index["a"], 0);
        assert_eq!(t[0].user_index["b"], 1);
        assert_eq!(t[0].num_users(), 2);
        assert_eq!(t[1].submission_id, "root");
    }

    #[test]
    fn lone_submission_is_a_thread() {
        let t = extract_threads(&[post("r", None, "a")]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].thread_id, "r");
    }

    #[test]
    fn orphan_named() {
        let err = extract_threads(&[post("r", None, "a"), post("x", Some("gone"), "b")]).unwrap_err();
        match err {
            CorpusError::OrphanPost { post_id, .. } => assert_eq!(post_id, "x"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn cycle_detected() {
        let f = [post("r", None, "a"), post("x", Some("y"), "b"), post("y", Some("x"), "c")];
        assert!(matches!(extract_threads(&f), Err(CorpusError::Cycle { .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = [post("r", None, "a"), post("r", None, "b")];
        assert!(matches!(extract_threads(&f), Err(CorpusError::DuplicatePost(_))));
    }
}
