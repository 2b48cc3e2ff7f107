//! Map then reduce: build the hierarchical tree from a handful of requests
//! and generalize it into a placeholder-typed schema.
//!
//! cargo run -p apimap --example learn_schema

use apimap::reducer::reduce_tree;
use apimap::tree::ApiTree;
use apimap::{parse_request, RawRequest};

fn main() -> apimap::Result<()> {
    let mut traffic = Vec::new();
    for id in [17, 42, 1001, 73, 5] {
        traffic.push(RawRequest::new("GET", format!("/api/users/{id}")));
        traffic.push(RawRequest::new(
            "GET",
            format!("/api/users/{id}/orders?page=2"),
        ));
    }
    for id in [
        "3f2a6c1e-9b4d-4e8a-a1f0-5c7d2e9b8a10",
        "b0e1c2d3-a4b5-4c6d-8e7f-0a1b2c3d4e5f",
        "0c9d8e7f-6a5b-4c3d-9e1f-aa00bb11cc22",
    ] {
        traffic.push(RawRequest::new("DELETE", format!("/api/sessions/{id}")));
    }
    traffic.push(RawRequest::new("POST", "/api/login").body(r#"{"user": "ana"}"#));
    traffic.push(RawRequest::new("GET", "/health"));

    let mut tree = ApiTree::default();
    for raw in &traffic {
        tree.insert_request(&parse_request(raw)?);
    }
    println!(
        "tree: {} nodes from {} requests",
        tree.node_count(),
        traffic.len()
    );

    let schema = reduce_tree(&tree, 3);
    println!(
        "schema: {} nodes, {} endpoints\n",
        schema.node_count(),
        schema.terminal_count()
    );
    for path in schema.templated_paths() {
        println!("  {path}");
    }
    println!("\ntopology: {}", schema.topology());
    println!("\n{}", serde_json::to_string_pretty(&schema.view())?);
    Ok(())
}
