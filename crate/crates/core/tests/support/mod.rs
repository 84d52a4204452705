pub mod spearman_oracle;
